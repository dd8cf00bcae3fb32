use serde::{Deserialize, Serialize};

use crate::autodiff::{Gradients, ParamKind, ParamSet};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with one moment pair per scalar.
///
/// Dense tensors follow the textbook update every step (an untouched
/// tensor sees a zero gradient). Embedding tables without a dense gradient
/// are updated lazily: only the rows present in the gradient have their
/// moments advanced and values changed.
#[derive(Clone, Debug)]
pub struct Adam {
    cfg: AdamConfig,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(cfg: AdamConfig, params: &ParamSet) -> Self {
        let zeros: Vec<Vec<f64>> = params.ids().map(|id| vec![0.0; params.get(id).len()]).collect();
        Adam {
            cfg,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &Gradients) {
        self.t += 1;
        let t = self.t as i32;
        let bc1 = 1.0 - self.cfg.beta1.powi(t);
        let bc2 = 1.0 - self.cfg.beta2.powi(t);
        let ids: Vec<_> = params.ids().collect();
        for id in ids {
            if params.is_frozen(id) {
                continue;
            }
            let i = id.index();
            let lazy = params.kind(id) == ParamKind::Embedding && grads.dense(id).is_none();
            if lazy {
                let cols = params.get(id).cols();
                let rows: Vec<(usize, Vec<f64>)> = grads.sparse_rows(id).map(|(r, g)| (r, g.to_vec())).collect();
                let values = params.get_mut(id).values_mut();
                for (r, g) in rows {
                    let range = r * cols..(r + 1) * cols;
                    update(
                        &mut values[range.clone()],
                        &mut self.m[i][range.clone()],
                        &mut self.v[i][range],
                        &g,
                        &self.cfg,
                        bc1,
                        bc2,
                    );
                }
            } else {
                let g = grads.dense_or_zero(id, params);
                let (m, v) = (&mut self.m[i], &mut self.v[i]);
                update(params.get_mut(id).values_mut(), m, v, &g, &self.cfg, bc1, bc2);
            }
        }
    }
}

fn update(x: &mut [f64], m: &mut [f64], v: &mut [f64], g: &[f64], cfg: &AdamConfig, bc1: f64, bc2: f64) {
    for k in 0..x.len() {
        m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
        v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
        let mh = m[k] / bc1;
        let vh = v[k] / bc2;
        x[k] -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
    }
}
