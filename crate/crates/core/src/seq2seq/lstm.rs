use ndarray::{s, Array1, Array2, ArrayView1, Axis};

use super::params::LstmLayer;

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Activations of one layer over a whole sequence, kept for backprop.
pub(crate) struct LayerTrace {
    pub input: Array2<f64>,
    /// Activated gates per step: `[i, f, g, o]`, `T x 4H`.
    pub gates: Array2<f64>,
    pub cells: Array2<f64>,
    pub tanh_cells: Array2<f64>,
    pub hidden: Array2<f64>,
    pub h0: Array1<f64>,
    pub c0: Array1<f64>,
}

impl LayerTrace {
    pub fn last_state(&self) -> (Array1<f64>, Array1<f64>) {
        let t = self.hidden.nrows() - 1;
        (self.hidden.row(t).to_owned(), self.cells.row(t).to_owned())
    }
}

fn activate(z: &mut [f64], hidden: usize) {
    for (k, v) in z.iter_mut().enumerate() {
        *v = if (2 * hidden..3 * hidden).contains(&k) {
            v.tanh()
        } else {
            sigmoid(*v)
        };
    }
}

/// One step: returns activated gates, new cell and new hidden state.
pub(crate) fn lstm_step(
    layer: &LstmLayer,
    x: ArrayView1<f64>,
    h: ArrayView1<f64>,
    c: ArrayView1<f64>,
) -> (Array1<f64>, Array1<f64>) {
    let hd = layer.hidden_dim();
    let mut z = layer.w_x.dot(&x) + layer.w_h.dot(&h) + &layer.b;
    activate(z.as_slice_mut().unwrap(), hd);
    let mut c_new = Array1::zeros(hd);
    let mut h_new = Array1::zeros(hd);
    for k in 0..hd {
        let (i, f, g, o) = (z[k], z[hd + k], z[2 * hd + k], z[3 * hd + k]);
        c_new[k] = f * c[k] + i * g;
        h_new[k] = o * c_new[k].tanh();
    }
    (h_new, c_new)
}

pub(crate) fn lstm_forward(
    layer: &LstmLayer,
    input: Array2<f64>,
    h0: Array1<f64>,
    c0: Array1<f64>,
) -> LayerTrace {
    let steps = input.nrows();
    let hd = layer.hidden_dim();
    let mut gates = input.dot(&layer.w_x.t()) + &layer.b;
    let mut cells = Array2::zeros((steps, hd));
    let mut tanh_cells = Array2::zeros((steps, hd));
    let mut hidden = Array2::zeros((steps, hd));

    for t in 0..steps {
        let (h_prev, c_prev) = if t == 0 {
            (h0.view(), c0.view())
        } else {
            (hidden.row(t - 1), cells.row(t - 1))
        };
        let rec = layer.w_h.dot(&h_prev);
        let mut z = gates.row_mut(t);
        z += &rec;
        activate(z.as_slice_mut().unwrap(), hd);
        let mut c_row = Array1::zeros(hd);
        let mut tc_row = Array1::zeros(hd);
        let mut h_row = Array1::zeros(hd);
        for k in 0..hd {
            let (i, f, g, o) = (z[k], z[hd + k], z[2 * hd + k], z[3 * hd + k]);
            let c = f * c_prev[k] + i * g;
            let tc = c.tanh();
            c_row[k] = c;
            tc_row[k] = tc;
            h_row[k] = o * tc;
        }
        cells.row_mut(t).assign(&c_row);
        tanh_cells.row_mut(t).assign(&tc_row);
        hidden.row_mut(t).assign(&h_row);
    }
    LayerTrace {
        input,
        gates,
        cells,
        tanh_cells,
        hidden,
        h0,
        c0,
    }
}

/// Backpropagates through one layer.
///
/// `d_hidden` is the loss gradient w.r.t. every output state coming from above;
/// `dh_last`/`dc_last` flow into the final state from outside the sequence.
/// Accumulates into `grad` and returns the input gradient and the gradients
/// w.r.t. the initial state.
pub(crate) fn lstm_backward(
    layer: &LstmLayer,
    trace: &LayerTrace,
    d_hidden: &Array2<f64>,
    dh_last: Array1<f64>,
    dc_last: Array1<f64>,
    grad: &mut LstmLayer,
) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
    let steps = trace.input.nrows();
    let hd = layer.hidden_dim();
    let mut dz = Array2::zeros((steps, 4 * hd));
    let mut dh_next = dh_last;
    let mut dc_next = dc_last;
    // Matrix-vector products on transposed views are far slower than on a
    // contiguous copy.
    let w_h_t = layer.w_h.t().as_standard_layout().into_owned();

    for t in (0..steps).rev() {
        let z = trace.gates.row(t);
        let tc = trace.tanh_cells.row(t);
        let c_prev = if t == 0 {
            trace.c0.view()
        } else {
            trace.cells.row(t - 1)
        };
        let dh_above = d_hidden.row(t);
        let mut dz_row = dz.row_mut(t);
        for k in 0..hd {
            let (i, f, g, o) = (z[k], z[hd + k], z[2 * hd + k], z[3 * hd + k]);
            let dh = dh_above[k] + dh_next[k];
            let d_o = dh * tc[k];
            let dc = dc_next[k] + dh * o * (1.0 - tc[k] * tc[k]);
            dz_row[k] = dc * g * i * (1.0 - i);
            dz_row[hd + k] = dc * c_prev[k] * f * (1.0 - f);
            dz_row[2 * hd + k] = dc * i * (1.0 - g * g);
            dz_row[3 * hd + k] = d_o * o * (1.0 - o);
            dc_next[k] = dc * f;
        }
        dh_next = w_h_t.dot(&dz.row(t));
    }

    let mut h_prev = Array2::zeros((steps, hd));
    h_prev.row_mut(0).assign(&trace.h0);
    if steps > 1 {
        h_prev
            .slice_mut(s![1.., ..])
            .assign(&trace.hidden.slice(s![..steps - 1, ..]));
    }
    grad.w_x += &dz.t().dot(&trace.input);
    grad.w_h += &dz.t().dot(&h_prev);
    grad.b += &dz.sum_axis(Axis(0));
    let d_input = dz.dot(&layer.w_x);
    (d_input, dh_next, dc_next)
}
