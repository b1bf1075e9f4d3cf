"""Volume I/O, slice preprocessing, augmentation, splits and the slice dataset."""
