//! Explicit-index matrix-vector products for checking network forward passes.

pub struct Layer<'a> {
    /// `[outputs][inputs]`
    pub weights: &'a [f64],
    pub bias: &'a [f64],
    /// `None` for identity, `Some(slope)` for leaky ReLU.
    pub leaky_slope: Option<f64>,
}

pub fn forward(layers: &[Layer<'_>], input: &[f64]) -> Vec<f64> {
    let mut x = input.to_vec();
    for layer in layers {
        let n_out = layer.bias.len();
        let n_in = x.len();
        assert_eq!(layer.weights.len(), n_out * n_in);
        let mut y = vec![0.0; n_out];
        for o in 0..n_out {
            let mut s = layer.bias[o];
            for i in 0..n_in {
                s += layer.weights[o * n_in + i] * x[i];
            }
            y[o] = match layer.leaky_slope {
                Some(slope) if s < 0.0 => slope * s,
                _ => s,
            };
        }
        x = y;
    }
    x
}
