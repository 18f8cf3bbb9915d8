use crate::autograd::{ParamStore, Tensor};
use crate::Scalar;

/// Adam with decoupled weight decay.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamW<T: Scalar> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub m: ParamStore<T>,
    pub v: ParamStore<T>,
    /// Updates applied so far.
    pub t: u64,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(params: &ParamStore<T>, beta1: f64, beta2: f64, eps: f64, weight_decay: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            weight_decay,
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    /// One update with learning rate `lr`. Paths missing from `grads` are
    /// treated as zero gradients.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &ParamStore<T>, lr: f64) {
        self.t += 1;
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let c1 = T::one() - T::lit(self.beta1.powi(self.t as i32));
        let c2 = T::one() - T::lit(self.beta2.powi(self.t as i32));
        let (lr, eps, wd) = (T::lit(lr), T::lit(self.eps), T::lit(self.weight_decay));
        let mut new_p = ParamStore::new();
        let mut new_m = ParamStore::new();
        let mut new_v = ParamStore::new();
        for (path, p) in params.iter() {
            let g = grads.get(path).ok();
            let m = self.m.get(path).expect("moment shapes follow params");
            let v = self.v.get(path).expect("moment shapes follow params");
            let n = p.numel();
            let (mut pd, mut md, mut vd) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
            for i in 0..n {
                let gi = g.map(|g| g.data()[i]).unwrap_or_else(T::zero);
                let mi = b1 * m.data()[i] + (T::one() - b1) * gi;
                let vi = b2 * v.data()[i] + (T::one() - b2) * gi * gi;
                let upd = (mi / c1) / ((vi / c2).sqrt() + eps) + wd * p.data()[i];
                pd.push(p.data()[i] - lr * upd);
                md.push(mi);
                vd.push(vi);
            }
            let shape = p.shape().to_vec();
            new_p.insert(path.clone(), Tensor::new(shape.clone(), pd).expect("same shape"));
            new_m.insert(path.clone(), Tensor::new(shape.clone(), md).expect("same shape"));
            new_v.insert(path.clone(), Tensor::new(shape, vd).expect("same shape"));
        }
        *params = new_p;
        self.m = new_m;
        self.v = new_v;
    }
}
