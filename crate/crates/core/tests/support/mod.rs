//! Independent oracles shared by integration tests.

use episim_core::lstm::LstmConfig;

/// Straight-line reference for one time-step, reading parameters by the
/// documented flat layout.
pub fn reference_step(cfg: &LstmConfig, p: &[f64], x: &[f64], h_in: &[Vec<f64>], c_in: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let hs = cfg.hidden_size;
    let mut off = 0usize;
    let mut input: Vec<f64> = x.to_vec();
    let mut h_out = Vec::new();
    let mut c_out = Vec::new();
    for l in 0..cfg.num_layers {
        let n_in = input.len();
        let cols = n_in + hs;
        let w_base = off;
        let b_base = off + 4 * hs * cols;
        off = b_base + 4 * hs;
        let mut h_new = vec![0.0; hs];
        let mut c_new = vec![0.0; hs];
        for k in 0..hs {
            let mut pre = [0.0f64; 4];
            for (gate, z) in pre.iter_mut().enumerate() {
                let row = gate * hs + k;
                let mut acc = p[b_base + row];
                for q in 0..n_in {
                    acc += p[w_base + row * cols + q] * input[q];
                }
                for q in 0..hs {
                    acc += p[w_base + row * cols + n_in + q] * h_in[l][q];
                }
                *z = acc;
            }
            let ig = 1.0 / (1.0 + (-pre[0]).exp());
            let fg = 1.0 / (1.0 + (-pre[1]).exp());
            let gg = pre[2].tanh();
            let og = 1.0 / (1.0 + (-pre[3]).exp());
            c_new[k] = fg * c_in[l][k] + ig * gg;
            h_new[k] = og * c_new[k].tanh();
        }
        input = h_new.clone();
        h_out.push(h_new);
        c_out.push(c_new);
    }
    let d = cfg.input_dim;
    let mut y = vec![0.0; d];
    for j in 0..d {
        y[j] = p[off + d * hs + j];
        for k in 0..hs {
            y[j] += p[off + j * hs + k] * input[k];
        }
    }
    (y, h_out, c_out)
}
