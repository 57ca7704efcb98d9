//! Pooling and resampling over planar `(channels, height, width)` buffers.

pub fn avg_pool(data: &[f64], channels: usize, h: usize, w: usize, f: usize) -> Vec<f64> {
    let (oh, ow) = (h / f, w / f);
    let norm = 1.0 / (f * f) as f64;
    let mut out = vec![0.0; channels * oh * ow];
    for c in 0..channels {
        let src = &data[c * h * w..(c + 1) * h * w];
        let dst = &mut out[c * oh * ow..(c + 1) * oh * ow];
        for y in 0..h {
            let row = &src[y * w..(y + 1) * w];
            let drow = &mut dst[(y / f) * ow..(y / f + 1) * ow];
            for (x, v) in row.iter().enumerate() {
                drow[x / f] += v;
            }
        }
        for v in dst.iter_mut() {
            *v *= norm;
        }
    }
    out
}

/// Adjoint of [`avg_pool`]; `oh`, `ow` are the pooled dimensions.
pub fn avg_pool_vjp(grad: &[f64], channels: usize, oh: usize, ow: usize, f: usize) -> Vec<f64> {
    let (h, w) = (oh * f, ow * f);
    let norm = 1.0 / (f * f) as f64;
    let mut out = vec![0.0; channels * h * w];
    for c in 0..channels {
        for y in 0..h {
            for x in 0..w {
                out[(c * h + y) * w + x] = grad[(c * oh + y / f) * ow + x / f] * norm;
            }
        }
    }
    out
}

pub fn upsample_nearest(data: &[f64], channels: usize, h: usize, w: usize, f: usize) -> Vec<f64> {
    let (oh, ow) = (h * f, w * f);
    let mut out = vec![0.0; channels * oh * ow];
    for c in 0..channels {
        for y in 0..oh {
            for x in 0..ow {
                out[(c * oh + y) * ow + x] = data[(c * h + y / f) * w + x / f];
            }
        }
    }
    out
}

/// Adjoint of [`upsample_nearest`]; `h`, `w` are the source dimensions.
pub fn upsample_nearest_vjp(grad: &[f64], channels: usize, h: usize, w: usize, f: usize) -> Vec<f64> {
    let (oh, ow) = (h * f, w * f);
    let mut out = vec![0.0; channels * h * w];
    for c in 0..channels {
        for y in 0..oh {
            for x in 0..ow {
                out[(c * h + y / f) * w + x / f] += grad[(c * oh + y) * ow + x];
            }
        }
    }
    out
}

pub fn global_avg_pool(data: &[f64], channels: usize, hw: usize) -> Vec<f64> {
    (0..channels)
        .map(|c| data[c * hw..(c + 1) * hw].iter().sum::<f64>() / hw as f64)
        .collect()
}

pub fn global_avg_pool_vjp(grad: &[f64], hw: usize) -> Vec<f64> {
    grad.iter()
        .flat_map(|&g| std::iter::repeat_n(g / hw as f64, hw))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inner(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn adjoint_identities() {
        let x: Vec<f64> = (0..2 * 6 * 6).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let g: Vec<f64> = (0..2 * 3 * 3).map(|i| (i as f64).cos()).collect();
        let lhs = inner(&avg_pool(&x, 2, 6, 6, 2), &g);
        let rhs = inner(&x, &avg_pool_vjp(&g, 2, 3, 3, 2));
        assert!((lhs - rhs).abs() < 1e-12);

        let u: Vec<f64> = (0..2 * 3 * 3).map(|i| (i as f64 * 0.3).sin()).collect();
        let lhs = inner(&upsample_nearest(&u, 2, 3, 3, 2), &x);
        let rhs = inner(&u, &upsample_nearest_vjp(&x, 2, 3, 3, 2));
        assert!((lhs - rhs).abs() < 1e-12);

        let gg = [0.5, -2.0];
        let lhs = inner(&global_avg_pool(&x, 2, 36), &gg);
        let rhs = inner(&x, &global_avg_pool_vjp(&gg, 36));
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
