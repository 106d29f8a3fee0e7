use super::forward::Forward;
use super::params::{Init, ParamId, Scope};
use super::trace::Tracer;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One direction of an LSTM layer. Gates are packed `[i, f, g, o]`.
#[derive(Debug, Clone)]
pub struct LstmCell {
    pub name: String,
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub bias: ParamId,
    pub input_dim: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new(scope: &mut Scope, name: &str, input_dim: usize, hidden: usize) -> Result<Self> {
        if input_dim == 0 || hidden == 0 {
            return Err(Error::config(format!("{name}: lstm widths must be positive")));
        }
        let mut s = scope.sub(name);
        let g = 4 * hidden;
        Ok(LstmCell {
            w_ih: s.param(
                "w_ih",
                &[input_dim, g],
                Init::Xavier {
                    fan_in: input_dim,
                    fan_out: g,
                },
            )?,
            w_hh: s.param("w_hh", &[hidden, g], Init::Xavier { fan_in: hidden, fan_out: g })?,
            bias: s.param("bias", &[g], Init::Zeros)?,
            name: s.name().to_string(),
            input_dim,
            hidden,
        })
    }

    /// Hidden states for every step of `x: [k, input_dim]`, in the order the
    /// steps were visited.
    fn run(&self, f: &Forward, x: &Tensor, reverse: bool) -> Result<Vec<Tensor>> {
        let k = x.shape()[0];
        let h_dim = self.hidden;
        let pre = x.matmul(&f.param(self.w_ih))?.add_row(&f.param(self.bias))?;
        let w_hh = f.param(self.w_hh);
        let mut h = Tensor::zeros(&[1, h_dim]);
        let mut c = Tensor::zeros(&[1, h_dim]);
        let mut states = Vec::with_capacity(k);
        let steps: Box<dyn Iterator<Item = usize>> = if reverse { Box::new((0..k).rev()) } else { Box::new(0..k) };
        for t in steps {
            let gates = pre.slice(0, t, t + 1)?.add(&h.matmul(&w_hh)?)?;
            let i = gates.slice(1, 0, h_dim)?.sigmoid();
            let fg = gates.slice(1, h_dim, 2 * h_dim)?.sigmoid();
            let g = gates.slice(1, 2 * h_dim, 3 * h_dim)?.tanh();
            let o = gates.slice(1, 3 * h_dim, 4 * h_dim)?.sigmoid();
            c = fg.mul(&c)?.add(&i.mul(&g)?)?;
            h = o.mul(&c.tanh())?;
            states.push(h.clone());
        }
        Ok(states)
    }

    fn trace(&self, tr: &mut Tracer, k: usize) {
        let g = 4 * self.hidden;
        let macs = (k * (self.input_dim * g + self.hidden * g)) as u64;
        tr.record(
            &self.name,
            "lstm",
            &[k, self.input_dim],
            &[k, self.hidden],
            &[self.w_ih, self.w_hh, self.bias],
            macs,
            0,
        );
    }
}

/// Bidirectional LSTM returning the terminal states of both directions:
/// the forward state after the last slice and the backward state after the
/// first, concatenated to `[2 * hidden]`.
#[derive(Debug, Clone)]
pub struct BiLstm {
    pub name: String,
    pub layers: Vec<(LstmCell, LstmCell)>,
    pub hidden: usize,
}

impl BiLstm {
    pub fn new(scope: &mut Scope, name: &str, input_dim: usize, hidden: usize, num_layers: usize) -> Result<Self> {
        if num_layers == 0 {
            return Err(Error::config(format!("{name}: need at least one lstm layer")));
        }
        let mut s = scope.sub(name);
        let mut layers = Vec::with_capacity(num_layers);
        for l in 0..num_layers {
            let inp = if l == 0 { input_dim } else { 2 * hidden };
            layers.push((
                LstmCell::new(&mut s, &format!("l{l}.fwd"), inp, hidden)?,
                LstmCell::new(&mut s, &format!("l{l}.bwd"), inp, hidden)?,
            ));
        }
        Ok(BiLstm {
            name: s.name().to_string(),
            layers,
            hidden,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].0.input_dim
    }

    /// `x: [k, f]` to `[1, 2 * hidden]`.
    pub fn forward(&self, f: &Forward, x: &Tensor) -> Result<Tensor> {
        if x.ndim() != 2 || x.shape()[0] == 0 {
            return Err(Error::Usage("bilstm needs a non-empty [k, f] sequence".into()));
        }
        if x.shape()[1] != self.input_dim() {
            return Err(Error::Shape {
                op: "bilstm",
                lhs: x.shape().to_vec(),
                rhs: vec![self.input_dim()],
            });
        }
        let mut seq = x.clone();
        let mut terminal = None;
        for (l, (fwd, bwd)) in self.layers.iter().enumerate() {
            let hf = fwd.run(f, &seq, false)?;
            let mut hb = bwd.run(f, &seq, true)?;
            terminal = Some(Tensor::concat(&[hf[hf.len() - 1].clone(), hb[hb.len() - 1].clone()], 1)?);
            if l + 1 < self.layers.len() {
                hb.reverse();
                let rows = hf
                    .iter()
                    .zip(&hb)
                    .map(|(a, b)| Tensor::concat(&[a.clone(), b.clone()], 1))
                    .collect::<Result<Vec<_>>>()?;
                seq = Tensor::concat(&rows, 0)?;
            }
        }
        Ok(terminal.expect("at least one layer"))
    }

    pub fn trace(&self, tr: &mut Tracer, input: &[usize]) -> Result<Vec<usize>> {
        if input.len() != 2 || input[1] != self.input_dim() {
            return Err(Error::config(format!("{}: bad input {input:?}", self.name)));
        }
        for (fwd, bwd) in &self.layers {
            fwd.trace(tr, input[0]);
            bwd.trace(tr, input[0]);
        }
        Ok(vec![1, 2 * self.hidden])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ParamStore;

    /// Copies forward-direction weights onto the backward direction.
    fn tied(f: usize, h: usize) -> (ParamStore, BiLstm) {
        let mut store = ParamStore::new();
        let m = BiLstm::new(&mut Scope::root(&mut store), "lstm", f, h, 1).unwrap();
        store.materialize(11);
        let (fw, bw) = &m.layers[0];
        for (a, b) in [(fw.w_ih, bw.w_ih), (fw.w_hh, bw.w_hh), (fw.bias, bw.bias)] {
            let v = store.value(a).to_vec();
            store.set_value(b, v).unwrap();
        }
        (store, m)
    }

    fn seq(k: usize, f: usize) -> Tensor {
        Tensor::new((0..k * f).map(|i| (i as f64 * 1.3).cos()).collect(), &[k, f]).unwrap()
    }

    #[test]
    fn reversal_swaps_halves() {
        let (store, m) = tied(3, 4);
        let fw = Forward::eval(&store);
        let x = seq(5, 3);
        let y = m.forward(&fw, &x).unwrap();
        let yr = m.forward(&fw, &x.index_select(&[4, 3, 2, 1, 0]).unwrap()).unwrap();
        assert_eq!(&y.data()[..4], &yr.data()[4..]);
        assert_eq!(&y.data()[4..], &yr.data()[..4]);
    }

    #[test]
    fn single_step_halves_match() {
        let (store, m) = tied(3, 4);
        let y = m.forward(&Forward::eval(&store), &seq(1, 3)).unwrap();
        assert_eq!(&y.data()[..4], &y.data()[4..]);
    }

    #[test]
    fn stacked_layers_shape() {
        let mut store = ParamStore::new();
        let m = BiLstm::new(&mut Scope::root(&mut store), "lstm", 3, 2, 2).unwrap();
        store.materialize(1);
        let y = m.forward(&Forward::eval(&store), &seq(4, 3)).unwrap();
        assert_eq!(y.shape(), &[1, 4]);
    }
}
