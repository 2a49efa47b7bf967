use std::collections::BTreeMap;

use crate::error::Result;
use crate::prior::PriorParams;
use crate::tensorcore::{FloatMode, Tensor};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First and second moment estimates, keyed like the parameters, plus the
/// bias-correction step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: BTreeMap<String, Tensor>,
    pub v: BTreeMap<String, Tensor>,
    pub steps_done: u64,
}

impl AdamState {
    pub fn new(params: &PriorParams) -> Self {
        let m = params
            .iter()
            .map(|(n, t)| (n.clone(), Tensor::zeros(t.rows(), t.cols())))
            .collect::<BTreeMap<_, _>>();
        let v = m.clone();
        AdamState { m, v, steps_done: 0 }
    }

    pub(crate) fn from_parts(
        m: BTreeMap<String, Tensor>,
        v: BTreeMap<String, Tensor>,
        steps_done: u64,
    ) -> Self {
        AdamState { m, v, steps_done }
    }

    /// One Adam update over every parameter in canonical order, with global
    /// gradient-norm clipping. Parameters absent from `grads` see a zero
    /// gradient (their moments decay, values stay put on a fresh state).
    /// All persistent state is quantized to the float mode afterward.
    pub fn apply(
        &mut self,
        params: &mut PriorParams,
        grads: &BTreeMap<String, Tensor>,
        lr: f64,
        clip_norm: f64,
        mode: FloatMode,
    ) -> Result<()> {
        let mut sq_norm = 0.0;
        for g in grads.values() {
            sq_norm += g.data().iter().map(|&x| x * x).sum::<f64>();
        }
        let norm = sq_norm.sqrt();
        let clip_scale = if clip_norm > 0.0 && norm > clip_norm { clip_norm / norm } else { 1.0 };

        self.steps_done += 1;
        let t = self.steps_done as i32;
        let bias1 = 1.0 - ADAM_BETA1.powi(t);
        let bias2 = 1.0 - ADAM_BETA2.powi(t);

        for name in params.names() {
            let m = self.m.get_mut(&name).expect("moment missing for parameter");
            let v = self.v.get_mut(&name).expect("moment missing for parameter");
            let p = params.get_mut(&name)?;
            let zero = [];
            let gdata: &[f64] = grads.get(&name).map(|g| g.data()).unwrap_or(&zero);
            for i in 0..p.len() {
                let g = gdata.get(i).copied().unwrap_or(0.0) * clip_scale;
                let mi = ADAM_BETA1 * m.data()[i] + (1.0 - ADAM_BETA1) * g;
                let vi = ADAM_BETA2 * v.data()[i] + (1.0 - ADAM_BETA2) * g * g;
                let m_hat = mi / bias1;
                let v_hat = vi / bias2;
                let update = lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
                m.data_mut()[i] = mode.quantize(mi);
                v.data_mut()[i] = mode.quantize(vi);
                p.data_mut()[i] = mode.quantize(p.data()[i] - update);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::{init_params, PriorConfig};

    #[test]
    fn zero_gradient_on_fresh_state_moves_nothing() {
        let cfg = PriorConfig::toy();
        let mut params = init_params(&cfg, 1, FloatMode::F64).unwrap();
        let before = params.clone();
        let mut adam = AdamState::new(&params);
        let grads = BTreeMap::new();
        adam.apply(&mut params, &grads, 1e-3, 1.0, FloatMode::F64).unwrap();
        assert_eq!(params, before);
        assert_eq!(adam.steps_done, 1);
    }

    #[test]
    fn gradient_descends_a_quadratic() {
        // Minimize ||input_proj||² by feeding its own values as gradient.
        let cfg = PriorConfig::toy();
        let mut params = init_params(&cfg, 2, FloatMode::F64).unwrap();
        let mut adam = AdamState::new(&params);
        let initial: f64 =
            params.get("input_proj").unwrap().data().iter().map(|&x| x * x).sum();
        for _ in 0..200 {
            let mut grads = BTreeMap::new();
            let p = params.get("input_proj").unwrap();
            grads.insert(
                "input_proj".to_string(),
                Tensor::new(p.rows(), p.cols(), p.data().iter().map(|&x| 2.0 * x).collect())
                    .unwrap(),
            );
            adam.apply(&mut params, &grads, 1e-2, 0.0, FloatMode::F64).unwrap();
        }
        let after: f64 = params.get("input_proj").unwrap().data().iter().map(|&x| x * x).sum();
        assert!(after < initial * 0.05, "{after} vs {initial}");
    }

    #[test]
    fn clipping_bounds_the_applied_norm() {
        let cfg = PriorConfig::toy();
        let mut params = init_params(&cfg, 3, FloatMode::F64).unwrap();
        let before = params.get("input_proj").unwrap().clone();
        let mut adam = AdamState::new(&params);
        let p = params.get("input_proj").unwrap();
        let huge = Tensor::new(p.rows(), p.cols(), vec![1.0e6; p.len()]).unwrap();
        let mut grads = BTreeMap::new();
        grads.insert("input_proj".to_string(), huge);
        adam.apply(&mut params, &grads, 1e-3, 1.0, FloatMode::F64).unwrap();
        // First Adam step moves each coordinate by at most ~lr regardless,
        // but clipping must also keep the moment estimates sane.
        let m = adam.m.get("input_proj").unwrap();
        let m_norm: f64 = m.data().iter().map(|&x| x * x).sum::<f64>();
        assert!(m_norm.sqrt() <= 0.11, "clipped first moment norm {}", m_norm.sqrt());
        let after = params.get("input_proj").unwrap();
        for (a, b) in before.data().iter().zip(after.data()) {
            assert!((a - b).abs() <= 1.1e-3);
        }
    }

    #[test]
    fn f32_mode_state_is_f32_representable() {
        let cfg = PriorConfig::toy();
        let mut params = init_params(&cfg, 4, FloatMode::F32).unwrap();
        let mut adam = AdamState::new(&params);
        let p = params.get("output_proj").unwrap();
        let g = Tensor::new(
            p.rows(),
            p.cols(),
            (0..p.len()).map(|i| ((i as f64) * 0.1).sin()).collect(),
        )
        .unwrap();
        let mut grads = BTreeMap::new();
        grads.insert("output_proj".to_string(), g);
        adam.apply(&mut params, &grads, 1e-3, 1.0, FloatMode::F32).unwrap();
        for t in [params.get("output_proj").unwrap(), adam.m.get("output_proj").unwrap()] {
            for &x in t.data() {
                assert_eq!(x, x as f32 as f64, "value {x} not f32-representable");
            }
        }
    }
}
