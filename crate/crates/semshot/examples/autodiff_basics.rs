//! A tour of the tape-based autodiff core on its own: build a tiny
//! affine–relu–softmax classifier by hand, take gradients, and confirm them
//! with finite differences.

use semshot::gradcore::{finite_diff_check, Graph, Parameter, RngStream, Tensor, DEFAULT_EPS};

fn main() {
    let mut rng = RngStream::new(17, "autodiff-demo");
    let x = Tensor::new(
        vec![4, 3],
        (0..12).map(|_| rng.next_normal()).collect(),
    )
    .unwrap();
    let labels = [0usize, 2, 1, 2];

    let mut params = vec![
        Parameter::new(
            "w",
            Tensor::new(vec![3, 3], (0..9).map(|_| rng.next_normal() * 0.3).collect()).unwrap(),
        ),
        Parameter::new("b", Tensor::zeros(vec![1, 3])),
    ];

    let loss_value = {
        let g = Graph::new();
        let input = g.constant(x.clone());
        let w = g.leaf(params[0].value.clone());
        let b = g.leaf(params[1].value.clone());
        let logits = g.relu(g.affine(input, w, b).unwrap());
        let loss = g.cross_entropy_mean(logits, &labels).unwrap();
        g.backward(loss).unwrap();
        params[0].accumulate_grad(&g.grad(w));
        params[1].accumulate_grad(&g.grad(b));
        g.scalar_value(loss).unwrap()
    };
    println!("loss = {loss_value:.6}");
    println!("dL/db = {:?}", params[1].grad.data());

    let x_check = x;
    let report = finite_diff_check(
        &mut params,
        move |ps| {
            let g = Graph::new();
            let input = g.constant(x_check.clone());
            let w = g.leaf(ps[0].value.clone());
            let b = g.leaf(ps[1].value.clone());
            let logits = g.relu(g.affine(input, w, b)?);
            let loss = g.cross_entropy_mean(logits, &labels)?;
            g.backward(loss)?;
            ps[0].accumulate_grad(&g.grad(w));
            ps[1].accumulate_grad(&g.grad(b));
            g.scalar_value(loss)
        },
        DEFAULT_EPS,
        1e-6,
        None,
        &mut RngStream::new(17, "fd"),
    )
    .expect("analytic and numeric gradients agree");
    println!(
        "finite differences over {} coordinates, worst rel err {:.3e}",
        report.checked, report.worst_rel_err
    );
}
