pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn silu(xs: &[f64]) -> Vec<f64> {
    xs.iter().map(|&x| x * sigmoid(x)).collect()
}

/// `pre` is the activation input.
pub fn silu_backward(pre: &[f64], grad: &[f64]) -> Vec<f64> {
    pre.iter()
        .zip(grad)
        .map(|(&x, &g)| {
            let s = sigmoid(x);
            g * s * (1.0 + x * (1.0 - s))
        })
        .collect()
}

pub fn tanh(xs: &[f64]) -> Vec<f64> {
    xs.iter().map(|x| x.tanh()).collect()
}

/// `out` is the activation output.
pub fn tanh_backward(out: &[f64], grad: &[f64]) -> Vec<f64> {
    out.iter().zip(grad).map(|(&y, &g)| g * (1.0 - y * y)).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// `p` is the softmax output.
pub fn softmax_backward(p: &[f64], grad: &[f64]) -> Vec<f64> {
    let pg: f64 = p.iter().zip(grad).map(|(a, b)| a * b).sum();
    p.iter().zip(grad).map(|(&pi, &gi)| pi * (gi - pg)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(f: impl Fn(&[f64]) -> Vec<f64>, back: impl Fn(&[f64], &[f64]) -> Vec<f64>) {
        let x = vec![-1.3, -0.2, 0.0, 0.4, 2.1];
        let g = vec![0.3, -0.7, 1.1, 0.2, -0.5];
        let analytic = back(&x, &g);
        for i in 0..x.len() {
            let h = 1e-6;
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let fp: f64 = f(&xp).iter().zip(&g).map(|(a, b)| a * b).sum();
            let fm: f64 = f(&xm).iter().zip(&g).map(|(a, b)| a * b).sum();
            let fd = (fp - fm) / (2.0 * h);
            assert!((fd - analytic[i]).abs() < 1e-8, "{i}: {fd} vs {}", analytic[i]);
        }
    }

    #[test]
    fn silu_gradient() {
        fd_check(silu, silu_backward);
    }

    #[test]
    fn tanh_gradient() {
        fd_check(tanh, |x, g| tanh_backward(&tanh(x), g));
    }

    #[test]
    fn softmax_gradient() {
        fd_check(softmax, |x, g| softmax_backward(&softmax(x), g));
    }
}
