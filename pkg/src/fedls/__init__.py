"""Joint federated training and inference serving control."""
