//! Small numeric helpers shared by the estimators.

/// Median with the even-length convention used throughout the crate: the mean
/// of the two middle order statistics. Reorders `values`. Returns NaN when
/// `values` is empty.
pub fn median_in_place(values: &mut [f64]) -> f64 {
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    let mid = n / 2;
    let (lower, upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let lower = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

pub fn median(values: &[f64]) -> f64 {
    median_in_place(&mut values.to_vec())
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn lp_norm(v: &[f64], p: f64) -> f64 {
    if p == 2.0 {
        return l2_norm(v);
    }
    if p == 1.0 {
        return v.iter().map(|x| x.abs()).sum();
    }
    v.iter().map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p)
}

/// Dot product with four independent accumulators.
///
/// Every dense product in the crate goes through this kernel (or a kernel with
/// the identical per-output accumulation order), which is what makes batched
/// and single-vector sketching agree bit for bit.
#[inline(always)]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ta, tb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ta.iter().zip(tb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Four dot products against a shared left operand.
///
/// Each output is accumulated in exactly the order [`dot`] uses, so
/// `dot4(a, [b0, b1, b2, b3])[k] == dot(a, bk)` bit for bit.
#[inline(always)]
pub fn dot4(a: &[f64], b: [&[f64]; 4]) -> [f64; 4] {
    let len = a.len();
    for x in &b {
        debug_assert_eq!(x.len(), len);
    }
    let body = len - len % 4;
    let (x, _) = a[..body].as_chunks::<4>();
    let (y0, _) = b[0][..body].as_chunks::<4>();
    let (y1, _) = b[1][..body].as_chunks::<4>();
    let (y2, _) = b[2][..body].as_chunks::<4>();
    let (y3, _) = b[3][..body].as_chunks::<4>();
    let chunks = x.len();
    let (y0, y1, y2, y3) = (&y0[..chunks], &y1[..chunks], &y2[..chunks], &y3[..chunks]);
    let mut acc = [[0.0f64; 4]; 4];
    for c in 0..chunks {
        for lane in 0..4 {
            acc[0][lane] += x[c][lane] * y0[c][lane];
            acc[1][lane] += x[c][lane] * y1[c][lane];
            acc[2][lane] += x[c][lane] * y2[c][lane];
            acc[3][lane] += x[c][lane] * y3[c][lane];
        }
    }
    let mut out = [0.0; 4];
    for (k, y) in b.into_iter().enumerate() {
        let mut tail = 0.0;
        for (x, y) in a[body..].iter().zip(&y[body..]) {
            tail += x * y;
        }
        out[k] = (acc[k][0] + acc[k][1]) + (acc[k][2] + acc[k][3]) + tail;
    }
    out
}

/// `out[k] = dot(a, vectors[k])`, four at a time.
#[inline]
pub fn dot_many(a: &[f64], vectors: &[&[f64]], out: &mut [f64]) {
    debug_assert_eq!(vectors.len(), out.len());
    let mut groups = vectors.chunks_exact(4);
    let mut outs = out.chunks_exact_mut(4);
    for (g, o) in (&mut groups).zip(&mut outs) {
        o.copy_from_slice(&dot4(a, [g[0], g[1], g[2], g[3]]));
    }
    for (v, o) in groups.remainder().iter().zip(outs.into_remainder()) {
        *o = dot(a, v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_odd_and_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
        assert_eq!(median(&[5.0]), 5.0);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn median_with_ties() {
        assert_eq!(median(&[1.0, 1.0, 1.0, 7.0]), 1.0);
        assert_eq!(median(&[0.0, 0.0]), 0.0);
    }

    #[test]
    fn dot_matches_naive_on_small_inputs() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
        let b = [7.0, 6.0, 5.0, 4.0, 3.0, 2.0, 1.0];
        assert_eq!(dot(&a, &b), 84.0);
        assert_eq!(dot(&[], &[]), 0.0);
    }

    #[test]
    fn dot4_matches_dot_bitwise() {
        for len in [0, 1, 3, 4, 7, 64, 65] {
            let a: Vec<f64> = (0..len).map(|i| (i as f64 * 0.37).sin()).collect();
            let bs: Vec<Vec<f64>> = (0..4)
                .map(|k| {
                    (0..len)
                        .map(|i| ((i * 7 + k) as f64 * 0.11).cos() * 1e3)
                        .collect()
                })
                .collect();
            let got = dot4(&a, [&bs[0], &bs[1], &bs[2], &bs[3]]);
            for k in 0..4 {
                assert_eq!(
                    got[k].to_bits(),
                    dot(&a, &bs[k]).to_bits(),
                    "len {len} k {k}"
                );
            }
            let refs: Vec<&[f64]> = bs
                .iter()
                .map(|b| b.as_slice())
                .chain([bs[0].as_slice()])
                .collect();
            let mut out = vec![0.0; 5];
            dot_many(&a, &refs, &mut out);
            assert_eq!(out[4].to_bits(), dot(&a, &bs[0]).to_bits());
        }
    }

    #[test]
    fn norms() {
        assert_eq!(l2_norm(&[3.0, 4.0]), 5.0);
        assert_eq!(lp_norm(&[3.0, -4.0], 1.0), 7.0);
        assert!((lp_norm(&[1.0, 1.0], 0.5) - 4.0).abs() < 1e-12);
    }
}
