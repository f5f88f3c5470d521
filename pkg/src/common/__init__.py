"""Common utilities and configuration for the streaming SVM toolkit."""
