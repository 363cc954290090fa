use crate::error::{Error, Result};
use crate::ndcore::Tensor;
use crate::seqmodel::ParamStore;

#[derive(Debug, Clone)]
struct Moments {
    m: Tensor,
    v: Tensor,
    steps: i32,
}

/// Adam with per-parameter step counts.
///
/// A parameter whose gradient is `None` (not reached by the loss) is left
/// alone and its bias correction does not advance. This matters for the
/// per-arm parameters, which miss any batch without units of that arm.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    state: Vec<Option<Moments>>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Adam { learning_rate, beta1: 0.9, beta2: 0.999, eps: 1e-8, state: Vec::new() }
    }

    /// First moment of one parameter, if it has been stepped.
    pub fn first_moment(&self, index: usize) -> Option<&Tensor> {
        self.state.get(index)?.as_ref().map(|s| &s.m)
    }

    pub fn second_moment(&self, index: usize) -> Option<&Tensor> {
        self.state.get(index)?.as_ref().map(|s| &s.v)
    }

    /// Applies one update. `grads[k]` belongs to the `k`-th parameter of
    /// `store`. Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Option<&Tensor>]) -> Result<()> {
        if grads.len() != store.len() {
            return Err(Error::InvalidArgument(format!(
                "{} gradients for {} parameters",
                grads.len(),
                store.len()
            )));
        }
        for (id, g) in store.ids().zip(grads) {
            if let Some(g) = g {
                if g.shape() != store.get(id).shape() {
                    return Err(Error::InvalidArgument(format!(
                        "gradient {:?} for parameter {} of shape {:?}",
                        g.shape(),
                        store.name(id),
                        store.get(id).shape()
                    )));
                }
                if !g.all_finite() {
                    return Err(Error::Numerical(format!("non-finite gradient for parameter {}", store.name(id))));
                }
            }
        }
        if self.state.len() < store.len() {
            self.state.resize(store.len(), None);
        }
        let ids: Vec<_> = store.ids().collect();
        for (id, g) in ids.into_iter().zip(grads) {
            let Some(g) = g else { continue };
            let slot = self.state[id.index()].get_or_insert_with(|| Moments {
                m: Tensor::zeros(g.shape()),
                v: Tensor::zeros(g.shape()),
                steps: 0,
            });
            slot.steps += 1;
            let c1 = 1.0 - self.beta1.powi(slot.steps);
            let c2 = 1.0 - self.beta2.powi(slot.steps);
            let theta = store.get_mut(id).data_mut();
            let (m, v) = (slot.m.data_mut(), slot.v.data_mut());
            for (k, &gk) in g.data().iter().enumerate() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * gk;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * gk * gk;
                let mh = m[k] / c1;
                let vh = v[k] / c2;
                theta[k] -= self.learning_rate * mh / (vh.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
