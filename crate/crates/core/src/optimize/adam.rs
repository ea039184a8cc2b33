use crate::field::Field;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            step_size: 0.02,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction, one moment pair per parameter field.
#[derive(Debug, Clone)]
pub struct Adam {
    params: AdamParams,
    t: i32,
    m: Vec<Field>,
    v: Vec<Field>,
}

impl Adam {
    pub fn new(params: AdamParams) -> Self {
        Adam {
            params,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn set_step_size(&mut self, step_size: f64) {
        self.params.step_size = step_size;
    }

    /// Updates `fields` in place. The first call fixes the parameter layout.
    pub fn step(&mut self, fields: &mut [Field], grads: &[Field]) {
        assert_eq!(fields.len(), grads.len(), "one gradient per parameter");
        if self.m.is_empty() {
            self.m = fields
                .iter()
                .map(|f| Field::zeros(f.height(), f.width(), f.channels()))
                .collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let AdamParams {
            step_size,
            beta1,
            beta2,
            eps,
        } = self.params;
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - beta2.powi(self.t);
        for (((x, g), m), v) in fields
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            assert_eq!(x.len(), g.len(), "gradient shape");
            let xs = x.data_mut();
            let (ms, vs) = (m.data_mut(), v.data_mut());
            for i in 0..xs.len() {
                let gi = g.data()[i];
                ms[i] = beta1 * ms[i] + (1.0 - beta1) * gi;
                vs[i] = beta2 * vs[i] + (1.0 - beta2) * gi * gi;
                let m_hat = ms[i] / c1;
                let v_hat = vs[i] / c2;
                xs[i] -= step_size * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}
