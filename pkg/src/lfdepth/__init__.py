"""Light-field depth estimation: EPI structure tensors refined by dual-constrained TV."""
