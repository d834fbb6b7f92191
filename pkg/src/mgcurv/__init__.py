"""Heat flow, optimal transport and weak curvature checks on metric graphs."""
