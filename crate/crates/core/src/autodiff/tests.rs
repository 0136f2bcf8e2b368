use super::*;
use crate::error::Error;

fn scalar_input(g: &mut Graph, x: f64, tangent: f64) -> Var {
    g.input(Array::scalar(x), vec![Some(Array::scalar(tangent))])
        .unwrap()
}

#[test]
fn tanh_at_zero_has_unit_tangent() {
    let mut g = Graph::new(1);
    let x = scalar_input(&mut g, 0.0, 1.0);
    let y = g.tanh(x).unwrap();
    assert_eq!(g.value(y).item(), 0.0);
    let t = g.tangent(y, 0);
    assert_eq!(g.value(t).item(), 1.0);
}

#[test]
fn valid_convolution_shape_rule() {
    let mut g = Graph::new(0);
    let x = g.constant(Array::zeros(&[1, 1, 12, 8]));
    let k = g.constant(Array::zeros(&[1, 1, 3, 3]));
    let y = g.conv2d(x, k).unwrap();
    assert_eq!(g.shape(y), &[1, 1, 10, 6]);
}

#[test]
fn product_rule_on_square() {
    let mut g = Graph::new(1);
    let x = scalar_input(&mut g, 3.0, 1.0);
    let y = g.mul(x, x).unwrap();
    assert_eq!(g.value(y).item(), 9.0);
    let t = g.tangent(y, 0);
    assert_eq!(g.value(t).item(), 6.0);
}

#[test]
fn linear_and_quadratic_gradients() {
    let mut params = ParamSet::new();
    params.insert("w", Array::scalar(0.7)).unwrap();
    let mut g = Graph::new(0);
    let w = g.param(&params, "w").unwrap();
    let x = g.constant(Array::scalar(2.0));
    let loss = g.mul(w, x).unwrap();
    let grads = g.backward(loss, &params).unwrap();
    assert_eq!(grads.get("w").unwrap().item(), 2.0);

    let mut params = ParamSet::new();
    params
        .insert("w", Array::new(&[2], vec![1.0, -2.0]).unwrap())
        .unwrap();
    let mut g = Graph::new(0);
    let w = g.param(&params, "w").unwrap();
    let sq = g.square(w).unwrap();
    let loss = g.sum(sq).unwrap();
    let grads = g.backward(loss, &params).unwrap();
    assert_eq!(grads.get("w").unwrap().data(), &[2.0, -4.0]);
}

#[test]
fn unreachable_params_get_zero_gradients() {
    let mut params = ParamSet::new();
    params.insert("used", Array::scalar(1.5)).unwrap();
    params.insert("unused", Array::new(&[3], vec![1.0; 3]).unwrap()).unwrap();
    params.insert("bound_unused", Array::scalar(4.0)).unwrap();
    let mut g = Graph::new(0);
    let w = g.param(&params, "used").unwrap();
    let _ = g.param(&params, "bound_unused").unwrap();
    let loss = g.square(w).unwrap();
    let grads = g.backward(loss, &params).unwrap();
    assert_eq!(grads.get("used").unwrap().item(), 3.0);
    assert_eq!(grads.get("unused").unwrap().data(), &[0.0; 3]);
    assert_eq!(grads.get("bound_unused").unwrap().item(), 0.0);
}

#[test]
fn non_scalar_loss_is_rejected() {
    let params = ParamSet::new();
    let mut g = Graph::new(0);
    let x = g.constant(Array::zeros(&[2]));
    assert!(matches!(
        g.backward(x, &params),
        Err(Error::NonScalarLoss(_))
    ));
}

#[test]
fn shape_mismatch_and_non_finite_are_errors() {
    let mut g = Graph::new(0);
    let a = g.constant(Array::zeros(&[2]));
    let b = g.constant(Array::zeros(&[3]));
    assert!(matches!(g.add(a, b), Err(Error::ShapeMismatch { .. })));
    let neg = g.constant(Array::scalar(-1.0));
    assert!(matches!(g.ln(neg), Err(Error::NonFinite { op: "ln" })));
    let zero = g.constant(Array::scalar(0.0));
    let one = g.constant(Array::scalar(1.0));
    assert!(matches!(g.div(one, zero), Err(Error::NonFinite { .. })));
}

#[test]
fn coordinate_derivative_examples() {
    // v(x, t) = x * t at (2, 3) along x
    let mut g = Graph::new(1);
    let coords = Array::matrix(1, 2, vec![2.0, 3.0]).unwrap();
    let d = coordinate_derivative(&mut g, &coords, 0, |g, y| {
        let x = g.slice(y, 1, 0, 1)?;
        let t = g.slice(y, 1, 1, 1)?;
        Ok(vec![g.mul(x, t)?])
    })
    .unwrap();
    assert_eq!(g.value(d[0]).item(), 3.0);

    // sin(x) at 0
    let mut g = Graph::new(1);
    let coords = Array::matrix(1, 2, vec![0.0, 0.5]).unwrap();
    let d = coordinate_derivative(&mut g, &coords, 0, |g, y| {
        let x = g.slice(y, 1, 0, 1)?;
        Ok(vec![g.sin(x)?])
    })
    .unwrap();
    assert_eq!(g.value(d[0]).item(), 1.0);
}

#[test]
fn mixed_derivative_base_case() {
    let mut params = ParamSet::new();
    params.insert("w", Array::matrix(1, 1, vec![0.3]).unwrap()).unwrap();
    let mut g = Graph::new(1);
    let coords = Array::matrix(1, 1, vec![1.7]).unwrap();
    let d = coordinate_derivative(&mut g, &coords, 0, |g, x| {
        let w = g.param(&params, "w")?;
        Ok(vec![g.matmul(x, w)?])
    })
    .unwrap();
    let loss = g.sum(d[0]).unwrap();
    let grads = g.backward(loss, &params).unwrap();
    assert_eq!(grads.get("w").unwrap().item(), 1.0);
}

#[test]
fn mixed_derivative_of_theta_sin_is_exact() {
    for &x0 in &[-1.3, 0.0, 0.4, 2.9] {
        let mut params = ParamSet::new();
        params.insert("theta", Array::matrix(1, 1, vec![1.9]).unwrap()).unwrap();
        let mut g = Graph::new(1);
        let coords = Array::matrix(1, 1, vec![x0]).unwrap();
        let d = coordinate_derivative(&mut g, &coords, 0, |g, x| {
            let theta = g.param(&params, "theta")?;
            let s = g.sin(x)?;
            Ok(vec![g.mul(theta, s)?])
        })
        .unwrap();
        let loss = g.sum(d[0]).unwrap();
        let grads = g.backward(loss, &params).unwrap();
        assert_eq!(grads.get("theta").unwrap().item(), f64::cos(x0));
    }
}

#[test]
fn repeated_construction_is_bit_identical() {
    let build = || {
        let mut params = ParamSet::new();
        params
            .insert("w", Array::matrix(2, 2, vec![0.1, -0.4, 0.25, 0.9]).unwrap())
            .unwrap();
        let mut g = Graph::new(2);
        let x = g
            .input(
                Array::matrix(1, 2, vec![0.3, 0.8]).unwrap(),
                vec![
                    Some(Array::matrix(1, 2, vec![1.0, 0.0]).unwrap()),
                    Some(Array::matrix(1, 2, vec![0.0, 1.0]).unwrap()),
                ],
            )
            .unwrap();
        let w = g.param(&params, "w").unwrap();
        let h = g.matmul(x, w).unwrap();
        let h = g.tanh(h).unwrap();
        let tx = g.tangent(h, 0);
        let s = g.square(tx).unwrap();
        let loss = g.sum(s).unwrap();
        let grads = g.backward(loss, &params).unwrap();
        (g.value(loss).item().to_bits(), grads)
    };
    let (a, ga) = build();
    let (b, gb) = build();
    assert_eq!(a, b);
    assert_eq!(ga, gb);
}

#[test]
fn tangents_pass_through_structural_ops() {
    let mut g = Graph::new(1);
    let x = g
        .input(
            Array::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
            vec![Some(Array::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap())],
        )
        .unwrap();
    let c = g.constant(Array::matrix(2, 1, vec![5.0, 6.0]).unwrap());
    let cat = g.concat(&[x, c], 1).unwrap();
    assert_eq!(g.shape(cat), &[2, 3]);
    let t = g.tangent(cat, 0);
    assert_eq!(g.value(t).data(), &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    let rows = g.gather_rows(cat, &[1, 1, 0]).unwrap();
    let t = g.tangent(rows, 0);
    assert_eq!(g.value(t).data(), &[0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
    let s = g.sum_axis(rows, 1).unwrap();
    assert_eq!(g.value(s).data(), &[13.0, 13.0, 8.0]);
}
