"""Uniform row-subsampling of rank-deficient Gauss-Newton Hessians."""
