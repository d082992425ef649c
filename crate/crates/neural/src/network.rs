use crate::param::{Buffer, Param};
use crate::real::Real;

/// Access to the named tensors of a model.
pub trait Network<T: Real> {
    fn params(&self) -> Vec<&Param<T>>;
    fn params_mut(&mut self) -> Vec<&mut Param<T>>;
    fn buffers(&self) -> Vec<&Buffer<T>>;
    fn buffers_mut(&mut self) -> Vec<&mut Buffer<T>>;

    fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.numel()).sum()
    }

    fn trainable_count(&self) -> usize {
        self.params().iter().filter(|p| p.trainable).map(|p| p.numel()).sum()
    }

    /// Sets each parameter's trainability from its layer tag.
    fn set_trainable_by_tag(&mut self, trainable: &dyn Fn(&str) -> bool) {
        for p in self.params_mut() {
            p.trainable = trainable(&p.tag);
        }
    }

    /// Distinct layer tags in parameter order.
    fn tags(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for p in self.params() {
            if out.last() != Some(&p.tag) {
                out.push(p.tag.clone());
            }
        }
        out
    }
}
