use std::f64::consts::PI;

/// Adam with L2 weight decay folded into the gradient.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Adam {
    pub fn new(num_params: usize, weight_decay: f64) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.m.len());
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grads[i] + self.weight_decay * params[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Cosine-annealed learning rate at `epoch` of a `period`-epoch schedule.
pub fn cosine_annealing(base_lr: f64, min_lr: f64, epoch: usize, period: usize) -> f64 {
    if period == 0 {
        return base_lr;
    }
    let e = epoch.min(period) as f64;
    min_lr + 0.5 * (base_lr - min_lr) * (1.0 + (PI * e / period as f64).cos())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_quadratic() {
        let mut p = vec![3.0, -2.0];
        let mut opt = Adam::new(2, 0.0);
        for _ in 0..2000 {
            let g: Vec<f64> = p.iter().map(|x| 2.0 * x).collect();
            opt.step(&mut p, &g, 0.05);
        }
        assert!(p.iter().all(|x| x.abs() < 1e-3));
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = vec![1.0];
        let mut opt = Adam::new(1, 0.0);
        opt.step(&mut p, &[0.5], 0.01);
        assert!((p[0] - 0.99).abs() < 1e-9);
    }

    #[test]
    fn annealing_endpoints() {
        assert_eq!(cosine_annealing(1e-3, 0.0, 0, 200), 1e-3);
        assert!(cosine_annealing(1e-3, 0.0, 200, 200).abs() < 1e-18);
        assert!((cosine_annealing(1e-3, 0.0, 100, 200) - 5e-4).abs() < 1e-15);
    }
}
