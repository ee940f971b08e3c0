use std::collections::BTreeMap;

use super::{Real, Tensor, TensorError};

#[derive(Clone, Debug, PartialEq)]
pub struct Param<T = f32> {
    pub value: Tensor<T>,
    pub grad: Option<Tensor<T>>,
    pub m: Tensor<T>,
    pub v: Tensor<T>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Named parameters plus Adam state. Iteration order is by name, which keeps
/// checkpoints byte-stable.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T = f32> {
    params: BTreeMap<String, Param<T>>,
    step: u64,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            params: BTreeMap::new(),
            step: 0,
        }
    }

    pub fn insert(&mut self, name: &str, value: Tensor<T>) {
        let zeros = Tensor::zeros(value.shape().to_vec());
        self.params.insert(
            name.to_string(),
            Param {
                value,
                grad: None,
                m: zeros.clone(),
                v: zeros,
            },
        );
    }

    pub(crate) fn insert_param(&mut self, name: &str, p: Param<T>) {
        self.params.insert(name.to_string(), p);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.params.get(name).map(|p| &p.value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.params.get_mut(name).map(|p| &mut p.value)
    }

    pub fn param(&self, name: &str) -> Option<&Param<T>> {
        self.params.get(name)
    }

    pub fn grad(&self, name: &str) -> Option<&Tensor<T>> {
        self.params.get(name).and_then(|p| p.grad.as_ref())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param<T>)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total scalar parameter count, optionally restricted to a name prefix.
    pub fn count(&self, prefix: &str) -> usize {
        self.params
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .map(|(_, p)| p.value.numel())
            .sum()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub(crate) fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    pub fn accumulate_grad(&mut self, name: &str, g: &Tensor<T>) -> Result<(), TensorError> {
        let p = self
            .params
            .get_mut(name)
            .ok_or_else(|| TensorError::Contract(format!("gradient for unknown parameter '{name}'")))?;
        if g.shape() != p.value.shape() {
            return Err(TensorError::Contract(format!(
                "gradient shape {:?} != parameter shape {:?} for '{name}'",
                g.shape(),
                p.value.shape()
            )));
        }
        match &mut p.grad {
            Some(acc) => {
                for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                    *a = *a + *b;
                }
            }
            None => p.grad = Some(g.clone()),
        }
        Ok(())
    }

    /// Gives every parameter without a gradient an explicit zero gradient.
    pub fn fill_missing_grads(&mut self) {
        for p in self.params.values_mut() {
            if p.grad.is_none() {
                p.grad = Some(Tensor::zeros(p.value.shape().to_vec()));
            }
        }
    }

    pub fn zero_grads(&mut self) {
        for p in self.params.values_mut() {
            p.grad = None;
        }
    }

    pub fn scale_grads(&mut self, s: f64) {
        let s = T::from_f64(s);
        for g in self.params.values_mut().filter_map(|p| p.grad.as_mut()) {
            g.data_mut().iter_mut().for_each(|v| *v = *v * s);
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.params
            .values()
            .filter_map(|p| p.grad.as_ref())
            .flat_map(|g| g.data().iter())
            .map(|v| v.as_f64().powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales gradients so their global L2 norm is at most `max_norm`.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let n = self.grad_norm();
        if n > max_norm && n > 0.0 {
            self.scale_grads(max_norm / n);
        }
        n
    }

    /// One Adam update with bias correction. Every parameter must carry a gradient;
    /// gradients are cleared afterwards.
    pub fn adam_step(&mut self, cfg: &AdamConfig) -> Result<(), TensorError> {
        if let Some((name, _)) = self.params.iter().find(|(_, p)| p.grad.is_none()) {
            return Err(TensorError::Contract(format!("adam_step: parameter '{name}' has no gradient")));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        let (b1, b2) = (T::from_f64(cfg.beta1), T::from_f64(cfg.beta2));
        let (ob1, ob2) = (T::one() - b1, T::one() - b2);
        for p in self.params.values_mut() {
            let g = p.grad.take().expect("checked above");
            for i in 0..g.numel() {
                let gi = g.data()[i];
                let m = b1 * p.m.data()[i] + ob1 * gi;
                let v = b2 * p.v.data()[i] + ob2 * gi * gi;
                p.m.data_mut()[i] = m;
                p.v.data_mut()[i] = v;
                let mhat = m.as_f64() / bc1;
                let vhat = v.as_f64() / bc2;
                let upd = cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
                let w = &mut p.value.data_mut()[i];
                *w = T::from_f64(w.as_f64() - upd);
            }
        }
        Ok(())
    }

    /// Copy with every tensor converted to another scalar type.
    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|(k, p)| {
                    (
                        k.clone(),
                        Param {
                            value: p.value.cast(),
                            grad: p.grad.as_ref().map(Tensor::cast),
                            m: p.m.cast(),
                            v: p.v.cast(),
                        },
                    )
                })
                .collect(),
            step: self.step,
        }
    }

    /// Drops optimizer moments and step count (used when a checkpoint seeds a new run).
    pub fn reset_optimizer(&mut self) {
        self.step = 0;
        for p in self.params.values_mut() {
            p.m = Tensor::zeros(p.value.shape().to_vec());
            p.v = Tensor::zeros(p.value.shape().to_vec());
            p.grad = None;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(w: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::scalar(w));
        s
    }

    #[test]
    fn missing_grad_is_contract_error() {
        let mut s = scalar_store(1.0);
        assert!(matches!(s.adam_step(&AdamConfig::default()), Err(TensorError::Contract(_))));
    }

    #[test]
    fn zero_grad_leaves_params_unchanged() {
        let mut s = scalar_store(0.3);
        for _ in 0..5 {
            s.accumulate_grad("w", &Tensor::scalar(0.0)).unwrap();
            s.adam_step(&AdamConfig::default()).unwrap();
        }
        assert_eq!(s.get("w").unwrap().item(), 0.3);
        assert_eq!(s.step(), 5);
    }

    #[test]
    fn single_step_bias_corrected() {
        // m̂ = (0.1·1)/(1-0.9) = 1, v̂ = (0.001·1)/(1-0.999) = 1, Δ = -0.1/(1+1e-8)
        let mut s = scalar_store(0.0);
        s.accumulate_grad("w", &Tensor::scalar(1.0)).unwrap();
        let cfg = AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        };
        s.adam_step(&cfg).unwrap();
        let w = s.get("w").unwrap().item();
        assert!((w + 0.1 / (1.0 + 1e-8)).abs() < 1e-12, "{w}");
        assert!(s.grad("w").is_none());
    }

    #[test]
    fn constant_grad_moves_against_sign() {
        let mut s = scalar_store(0.0);
        let mut prev = 0.0;
        for _ in 0..50 {
            s.accumulate_grad("w", &Tensor::scalar(-2.0)).unwrap();
            s.adam_step(&AdamConfig::default()).unwrap();
            let w = s.get("w").unwrap().item();
            assert!(w > prev);
            prev = w;
        }
    }

    #[test]
    fn clip_limits_norm() {
        let mut s = ParamStore::<f64>::new();
        s.insert("a", Tensor::zeros([2]));
        s.accumulate_grad("a", &Tensor::new([2], vec![3.0, 4.0]).unwrap()).unwrap();
        assert_eq!(s.clip_grad_norm(1.0), 5.0);
        assert!((s.grad_norm() - 1.0).abs() < 1e-12);
    }
}
