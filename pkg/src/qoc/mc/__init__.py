"""Monte Carlo baselines: patient-level simulation and posterior sampling."""
