"""Trial designs and their Q-approximation runners."""
