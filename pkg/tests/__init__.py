"""Test package for gbdm."""
