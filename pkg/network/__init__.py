"""AXUNet network: module system, layers, attention, encoder and decoder."""
