//! First-order adaptive-moment optimizer with bias correction.

use crate::mat::Mat;
use crate::model::{GradAccum, Params};

pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    m: Vec<Mat>,
    v: Vec<Mat>,
}

impl Adam {
    pub fn new(lr: f64, params: &Params) -> Self {
        let shapes: Vec<Mat> = params
            .iter()
            .map(|(_, _, m)| Mat::zeros(m.rows(), m.cols()))
            .collect();
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: shapes.clone(),
            v: shapes,
        }
    }

    pub fn step(&mut self, params: &mut Params, grads: &GradAccum) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grads.get(crate::model::PId(i));
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            let p = params.value_mut(crate::model::PId(i));
            let (pd, md, vd, gd) = (p.data_mut(), m.data_mut(), v.data_mut(), g.data());
            for k in 0..gd.len() {
                md[k] = self.beta1 * md[k] + (1.0 - self.beta1) * gd[k];
                vd[k] = self.beta2 * vd[k] + (1.0 - self.beta2) * gd[k] * gd[k];
                let mhat = md[k] / bc1;
                let vhat = vd[k] / bc2;
                pd[k] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}
