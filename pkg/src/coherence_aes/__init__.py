"""Neural local coherence and essay scoring, trained jointly to flag shuffled essays."""
