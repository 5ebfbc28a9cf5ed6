use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn random(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Builds `sum(f(params) * weights)` and compares backward against central
/// differences for every parameter.
fn check_gradients<F>(params: &[Tensor], build: F)
where
    F: Fn(&mut Graph, &[Var]) -> Var,
{
    let eval = |ps: &[Tensor]| -> (Graph, Var) {
        let mut g = Graph::new();
        let vars: Vec<Var> = ps
            .iter()
            .enumerate()
            .map(|(i, p)| g.param(ParamId(i), p.clone()))
            .collect();
        let out = build(&mut g, &vars);
        let w = random(g.value(out).shape(), 999);
        let wv = g.constant(w);
        let prod = g.mul(out, wv).unwrap();
        let loss = g.sum(prod).unwrap();
        (g, loss)
    };
    let (mut g, loss) = eval(params);
    let grads = g.backward(loss).unwrap();
    for (i, p) in params.iter().enumerate() {
        let fd = finite_difference_gradient(
            |x| {
                let mut ps = params.to_vec();
                ps[i] = x.clone();
                let (g, l) = eval(&ps);
                g.value(l).item().unwrap()
            },
            p,
            1e-5,
        )
        .unwrap();
        let ad = grads.get(ParamId(i)).unwrap();
        let diff: f64 = ad.data().iter().zip(fd.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = fd.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        let rel = diff / norm.max(1e-12);
        assert!(rel < 1e-6, "param {i}: relative error {rel:e}");
    }
}

#[test]
fn sum_gives_ones() {
    let mut g = Graph::new();
    let p = g.param(ParamId(0), Tensor::from_vec(vec![0.5, -1.0, 2.0]).unwrap());
    let l = g.sum(p).unwrap();
    let grads = g.backward(l).unwrap();
    assert_eq!(grads.get(ParamId(0)).unwrap().data(), &[1.0, 1.0, 1.0]);
}

#[test]
fn sum_of_squares_gives_twice_input() {
    let mut g = Graph::new();
    let p = g.param(ParamId(0), Tensor::from_vec(vec![1.0, 2.0, 3.0]).unwrap());
    let sq = g.mul(p, p).unwrap();
    let l = g.sum(sq).unwrap();
    let grads = g.backward(l).unwrap();
    assert_eq!(grads.get(ParamId(0)).unwrap().data(), &[2.0, 4.0, 6.0]);
}

#[test]
fn identity_matvec_gives_ones() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
    let x = g.param(ParamId(0), Tensor::from_vec(vec![5.0, 7.0]).unwrap());
    let y = g.matmul(a, x).unwrap();
    let l = g.sum(y).unwrap();
    let grads = g.backward(l).unwrap();
    assert_eq!(grads.get(ParamId(0)).unwrap().data(), &[1.0, 1.0]);
}

#[test]
fn non_scalar_loss_is_rejected() {
    let mut g = Graph::new();
    let p = g.param(ParamId(0), Tensor::zeros(vec![3]));
    assert!(matches!(g.backward(p), Err(TensorError::NonScalarLoss(_))));
}

#[test]
fn disconnected_parameter_gets_zero_gradient() {
    let mut g = Graph::new();
    let p = g.param(ParamId(0), Tensor::from_vec(vec![1.0, 2.0]).unwrap());
    let _q = g.param(ParamId(1), Tensor::from_vec(vec![3.0, 4.0, 5.0]).unwrap());
    let l = g.sum(p).unwrap();
    let grads = g.backward(l).unwrap();
    assert_eq!(grads.get(ParamId(1)).unwrap().data(), &[0.0, 0.0, 0.0]);
}

#[test]
fn constants_receive_no_gradient() {
    let mut g = Graph::new();
    let c = g.constant(Tensor::from_vec(vec![1.0]).unwrap());
    let p = g.param(ParamId(0), Tensor::from_vec(vec![2.0]).unwrap());
    let s = g.mul(c, p).unwrap();
    let l = g.sum(s).unwrap();
    let grads = g.backward(l).unwrap();
    assert_eq!(grads.len(), 1);
}

#[test]
fn second_backward_is_an_error() {
    let mut g = Graph::new();
    let p = g.param(ParamId(0), Tensor::from_vec(vec![1.0]).unwrap());
    let l = g.sum(p).unwrap();
    g.backward(l).unwrap();
    assert_eq!(g.backward(l).unwrap_err(), TensorError::GraphConsumed);
}

#[test]
fn reused_node_accumulates() {
    // l = sum(p + p + p) -> gradient 3
    let mut g = Graph::new();
    let p = g.param(ParamId(0), Tensor::from_vec(vec![0.1, 0.2]).unwrap());
    let a = g.add(p, p).unwrap();
    let b = g.add(a, p).unwrap();
    let l = g.sum(b).unwrap();
    let grads = g.backward(l).unwrap();
    assert_eq!(grads.get(ParamId(0)).unwrap().data(), &[3.0, 3.0]);
}

#[test]
fn non_finite_forward_is_an_error() {
    let mut g = Graph::new();
    let p = g.param(ParamId(0), Tensor::from_vec(vec![1e300]).unwrap());
    let r = g.mul(p, p);
    assert!(matches!(r, Err(TensorError::NonFinite { .. })));
}

#[test]
fn fd_check_elementwise() {
    let ps = [random(&[3, 4], 1), random(&[3, 4], 2)];
    check_gradients(&ps, |g, v| g.add(v[0], v[1]).unwrap());
    check_gradients(&ps, |g, v| g.sub(v[0], v[1]).unwrap());
    check_gradients(&ps, |g, v| g.mul(v[0], v[1]).unwrap());
    check_gradients(&ps[..1], |g, v| g.scale(v[0], -2.5).unwrap());
    check_gradients(&ps[..1], |g, v| g.mean(v[0]).unwrap());
    check_gradients(&ps[..1], |g, v| g.reshape(v[0], vec![2, 6]).unwrap());
}

#[test]
fn fd_check_matmul() {
    let ps = [random(&[3, 4], 3), random(&[4, 5], 4)];
    check_gradients(&ps, |g, v| g.matmul(v[0], v[1]).unwrap());
    let ps = [random(&[3, 4], 5), random(&[4], 6)];
    check_gradients(&ps, |g, v| g.matmul(v[0], v[1]).unwrap());
}

#[test]
fn fd_check_linear() {
    let ps = [random(&[2, 3, 5, 4], 7), random(&[6, 3], 8), random(&[6], 9)];
    check_gradients(&ps, |g, v| g.linear(v[0], v[1], Some(v[2])).unwrap());
    check_gradients(&ps[..2], |g, v| g.linear(v[0], v[1], None).unwrap());
}

#[test]
fn fd_check_activations() {
    let ps = [random(&[4, 5], 10)];
    for act in Activation::ALL {
        check_gradients(&ps, |g, v| g.activation(v[0], act).unwrap());
    }
}

#[test]
fn fd_check_gather() {
    let ps = [random(&[2, 5], 11)];
    let idx: Arc<[usize]> = vec![0, 4, 4, 9, 3, 0, 1].into();
    check_gradients(&ps, |g, v| g.gather(v[0], idx.clone(), vec![7]).unwrap());
}

#[test]
fn fd_check_losses() {
    let ps = [random(&[3, 2, 4], 12)];
    let target = random(&[3, 2, 4], 13);
    let t1 = target.clone();
    check_gradients(&ps, move |g, v| {
        g.custom(Arc::new(MseLoss { target: t1.clone() }), &[v[0]]).unwrap()
    });
    check_gradients(&ps, move |g, v| {
        g.custom(Arc::new(RelativeL2Loss { target: target.clone() }), &[v[0]]).unwrap()
    });
}

#[test]
fn relative_l2_matches_definition() {
    let pred = Tensor::new(vec![2, 2], vec![1.0, 1.0, 0.0, 2.0]).unwrap();
    let target = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let op = RelativeL2Loss { target };
    let v = op.forward(&[&pred]).unwrap().item().unwrap();
    // sample 0: |(0,1)| / |(1,0)| = 1; sample 1: |(0,1)| / |(0,1)| = 1
    assert!((v - 1.0).abs() < 1e-12);
}

#[test]
fn forward_is_bit_deterministic() {
    let x = random(&[2, 8, 16], 14);
    let w = random(&[8, 8], 15);
    let run = || {
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let wv = g.param(ParamId(0), w.clone());
        let y = g.linear(xv, wv, None).unwrap();
        let y = g.activation(y, Activation::Gelu).unwrap();
        let l = g.sum(y).unwrap();
        let out = g.value(l).clone();
        let grads = g.backward(l).unwrap();
        (out, grads.get(ParamId(0)).unwrap().clone())
    };
    assert_eq!(run(), run());
}
