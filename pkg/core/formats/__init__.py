"""On-disk formats: array containers, checkpoints, interchange files, configs and reports."""
