"""On-ramp merging simulator for mixed human-driven and automated traffic."""
