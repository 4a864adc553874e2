use ndarray::{s, Array2, Array3, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Top-left offsets of a `patch`-wide window stepped by `stride` along an axis of length `n`.
pub fn patch_offsets(n: usize, patch: usize, stride: usize) -> Result<Vec<usize>> {
    if patch == 0 || stride == 0 {
        return Err(Error::config("patch", "patch size and stride must be positive"));
    }
    if n < patch {
        return Err(Error::config(
            "patch",
            format!("image extent {n} is smaller than patch {patch}"),
        ));
    }
    Ok((0..=(n - patch) / stride).map(|k| k * stride).collect())
}

/// Row-major grid of square patches.
pub fn extract_patches_2d(image: ArrayView2<f64>, patch: usize, stride: usize) -> Result<Vec<Array2<f64>>> {
    let rows = patch_offsets(image.nrows(), patch, stride)?;
    let cols = patch_offsets(image.ncols(), patch, stride)?;
    let mut out = Vec::with_capacity(rows.len() * cols.len());
    for &r in &rows {
        for &c in &cols {
            out.push(image.slice(s![r..r + patch, c..c + patch]).to_owned());
        }
    }
    Ok(out)
}

/// Start slices of depth windows of `n_slices` stepped by `depth_stride`.
pub fn depth_offsets(n_total: usize, n_slices: usize, depth_stride: usize) -> Result<Vec<usize>> {
    if n_slices == 0 || depth_stride == 0 {
        return Err(Error::config("patch.n_slices", "depth window and stride must be positive"));
    }
    if n_total < n_slices {
        return Err(Error::config(
            "patch.n_slices",
            format!("{n_total} slices cannot fill a stack of {n_slices}"),
        ));
    }
    Ok((0..=(n_total - n_slices) / depth_stride).map(|k| k * depth_stride).collect())
}

/// Stacks aligned per-slice patch lists into depth windows.
///
/// `slices[z][p]` is patch `p` of slice `z`. Output is ordered by start slice,
/// then patch position; stack `k` at depth `j` is `slices[start_k + j]`.
pub fn stack_patches_3d(
    slices: &[Vec<Array2<f64>>],
    n_slices: usize,
    depth_stride: usize,
) -> Result<Vec<Array3<f64>>> {
    let starts = depth_offsets(slices.len(), n_slices, depth_stride)?;
    let n_pos = slices[0].len();
    if slices.iter().any(|s| s.len() != n_pos) {
        return Err(Error::config("patch", "slices have different patch counts"));
    }
    let mut out = Vec::with_capacity(starts.len() * n_pos);
    for &k in &starts {
        for p in 0..n_pos {
            let views: Vec<ArrayView2<f64>> = (0..n_slices).map(|j| slices[k + j][p].view()).collect();
            out.push(ndarray::stack(Axis(0), &views).map_err(|e| Error::config("patch", e.to_string()))?);
        }
    }
    Ok(out)
}
