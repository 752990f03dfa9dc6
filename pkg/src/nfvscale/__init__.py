"""NFV instance scaling with learned per-VNF CPU thresholds."""
