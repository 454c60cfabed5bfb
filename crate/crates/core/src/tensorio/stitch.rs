use crate::error::{Error, Result};
use crate::tensorio::FeatureMap;

/// Reassembles a `2^k x 2^k` grid of per-quadrant maps (row-major order)
/// into one map of `2^k * L_q` by `2^k * V_q` cells.
///
/// Output cell `(r * L_q + i, c * V_q + j)` is cell `(i, j)` of quadrant
/// `(r, c)`. The result covers the union of the quadrant extents and is
/// tagged with resolution level `k`.
pub fn stitch_quadrants(quadrants: &[FeatureMap], k: u32) -> Result<FeatureMap> {
    let side = 1usize
        .checked_shl(k)
        .filter(|s| s.checked_mul(*s).is_some())
        .ok_or_else(|| Error::Argument(format!("resolution level {k} is too large")))?;
    if quadrants.len() != side * side {
        return Err(Error::Shape(format!(
            "resolution level {k} needs {} quadrants, got {}",
            side * side,
            quadrants.len()
        )));
    }
    let first = &quadrants[0];
    let (lq, vq, d) = first.dims();
    let p = first.patch_size();
    let (qh, qw) = first.effective_size();
    for (idx, q) in quadrants.iter().enumerate() {
        if q.dims() != (lq, vq, d) || q.patch_size() != p {
            return Err(Error::Shape(format!(
                "quadrant {idx} is {:?} at patch {}, quadrant 0 is {:?} at patch {p}",
                q.dims(),
                q.patch_size(),
                (lq, vq, d)
            )));
        }
    }

    let rows = side * lq;
    let cols = side * vq;
    let mut data = vec![0.0f32; rows * cols * d];
    let row_len = vq * d;
    for (idx, q) in quadrants.iter().enumerate() {
        let (qr, qc) = (idx / side, idx % side);
        for i in 0..lq {
            let src = &q.data()[i * row_len..(i + 1) * row_len];
            let dst_start = ((qr * lq + i) * cols + qc * vq) * d;
            data[dst_start..dst_start + row_len].copy_from_slice(src);
        }
    }
    let eff = (side * qh, side * qw);
    FeatureMap::from_parts(data, rows, cols, d, p, eff, eff, k)
}
