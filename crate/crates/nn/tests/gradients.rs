//! Back-propagation against central finite differences in 64-bit mode.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uasim_nn::{gradient_check, BiLstm, Dense, Graph, LayerNorm, ParamStore, Tensor};

fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

#[test]
fn linear_net_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut s = ParamStore::<f64>::new();
    let d = Dense::new(&mut s, "d", 4, 3, &mut rng).unwrap();
    let x = rand_vec(&mut rng, 8);
    let w = rand_vec(&mut rng, 6);
    let build = |g: &mut Graph<f64>, s: &ParamStore<f64>| {
        let xi = g.input(2, 4, x.clone())?;
        let y = d.forward(g, s, xi)?;
        let wt = g.input(2, 3, w.clone())?;
        let p = g.mul(y, wt)?;
        Ok(g.sum(p))
    };
    let r = gradient_check(&mut s, build, 1e-5, None, &mut rng).unwrap();
    assert!(r.max_rel_error < 1e-10, "{r:?}");
    assert_eq!(r.checked, 15);
}

#[test]
fn two_step_bilstm() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut s = ParamStore::<f64>::new();
    let stack = BiLstm::new(&mut s, "b", 3, 4, 2, &mut rng).unwrap();
    let x = rand_vec(&mut rng, 2 * 2 * 3);
    let target = rand_vec(&mut rng, 2 * 2 * 8);
    let build = |g: &mut Graph<f64>, s: &ParamStore<f64>| {
        let xi = g.input(4, 3, x.clone())?;
        let out = stack.forward(g, s, xi, 2, 2)?;
        g.squared_error(out.sequence, target.clone(), 1.0)
    };
    let r = gradient_check(&mut s, build, 1e-5, None, &mut rng).unwrap();
    assert!(r.max_rel_error < 1e-5, "{r:?}");
}

#[test]
fn residual_mlp_with_layer_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut s = ParamStore::<f64>::new();
    let (din, w, dout) = (6, 8, 3);
    let inp = Dense::new(&mut s, "in", din, w, &mut rng).unwrap();
    let blocks: Vec<(Dense, LayerNorm)> = (0..3)
        .map(|k| {
            let d = Dense::new(&mut s, &format!("h{k}"), w, w, &mut rng).unwrap();
            let ln = LayerNorm::new(&mut s, &format!("ln{k}"), w).unwrap();
            (d, ln)
        })
        .collect();
    let bridge = Dense::new(&mut s, "bridge", din, w, &mut rng).unwrap();
    let head = Dense::new(&mut s, "head", w, dout, &mut rng).unwrap();
    // non-trivial layer-norm affine parameters
    for k in 0..3 {
        s.set(&format!("ln{k}.gain"), Tensor::new(vec![w], rand_vec(&mut rng, w)).unwrap()).unwrap();
        s.set(&format!("ln{k}.bias"), Tensor::new(vec![w], rand_vec(&mut rng, w)).unwrap()).unwrap();
    }
    let x = rand_vec(&mut rng, 3 * din);
    let target = rand_vec(&mut rng, 3 * dout);
    let build = |g: &mut Graph<f64>, s: &ParamStore<f64>| {
        let xi = g.input(3, din, x.clone())?;
        let mut h = inp.forward(g, s, xi)?;
        for (d, ln) in &blocks {
            let a = d.forward(g, s, h)?;
            let n = ln.forward(g, s, a)?;
            h = g.leaky_relu(n);
        }
        let br = bridge.forward(g, s, xi)?;
        let h = g.add(h, br)?;
        let y = head.forward(g, s, h)?;
        g.squared_error(y, target.clone(), 0.5)
    };
    let r = gradient_check(&mut s, build, 1e-5, None, &mut rng).unwrap();
    assert!(r.max_rel_error < 1e-5, "{r:?}");
}

#[test]
fn elementwise_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut s = ParamStore::<f64>::new();
    let a = Dense::new(&mut s, "a", 3, 6, &mut rng).unwrap();
    let x = rand_vec(&mut rng, 6);
    let build = |g: &mut Graph<f64>, s: &ParamStore<f64>| {
        let xi = g.input(2, 3, x.clone())?;
        let y = a.forward(g, s, xi)?;
        let p = g.softplus(y);
        let t = g.tanh(y);
        let q = g.sigmoid(y);
        let m = g.mul(p, t)?;
        let m = g.add(m, q)?;
        let l = g.slice_cols(m, 1, 4)?;
        let r = g.slice_rows(m, 1, 1)?;
        let r = g.slice_cols(r, 0, 4)?;
        let c = g.concat_rows(&[l, r])?;
        let c = g.concat_cols(&[c, c])?;
        let c = g.scale(c, 1.7);
        let c = g.mul(c, c)?;
        Ok(g.sum(c))
    };
    let r = gradient_check(&mut s, build, 1e-5, None, &mut rng).unwrap();
    assert!(r.max_rel_error < 1e-6, "{r:?}");
}
