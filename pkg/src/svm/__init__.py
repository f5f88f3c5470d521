"""Kernel SVM solvers: exact incremental, semi-online LASVM and batch SMO."""
