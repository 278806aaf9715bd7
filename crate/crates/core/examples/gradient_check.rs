//! Records a small two-layer network on the tape and compares its gradient
//! with central finite differences.

use headimpact::autodiff::{finite_diff_check, Tape, Tensor, Var};
use headimpact::rng::Rng;

struct Fixed {
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    w2: Tensor,
}

fn loss<'a>(tape: &mut Tape<'a>, w: Var, f: &'a Fixed) -> headimpact::Result<Var> {
    let x = tape.leaf_ref(&f.x, false);
    let g = tape.leaf_ref(&f.gamma, false);
    let b = tape.leaf_ref(&f.beta, false);
    let w2 = tape.leaf_ref(&f.w2, false);
    let h = tape.matmul(x, w)?;
    let h = tape.layer_norm(h, g, b)?;
    let h = tape.gelu(h)?;
    let logits = tape.matmul(h, w2)?;
    tape.cross_entropy(logits, &[(0, 1), (1, 3), (2, 0), (3, 2), (4, 1)])
}

fn main() -> headimpact::Result<()> {
    let mut rng = Rng::new(7);
    let fixed = Fixed {
        x: Tensor::randn(&[5, 8], 1.0, &mut rng),
        w2: Tensor::randn(&[16, 4], 0.3, &mut rng),
        gamma: Tensor::ones(&[16]),
        beta: Tensor::zeros(&[16]),
    };
    let w1 = Tensor::randn(&[8, 16], 0.3, &mut rng);

    let mut tape = Tape::new();
    let w = tape.leaf_ref(&w1, true);
    let out = loss(&mut tape, w, &fixed)?;
    println!("loss              {:.6}", tape.value(out).data()[0]);
    let grads = tape.backward(out)?;
    let g = grads.get(w).expect("gradient of w1");
    println!(
        "|dL/dw1|          {:.6}",
        g.data().iter().map(|v| v * v).sum::<f64>().sqrt()
    );

    let err = finite_diff_check(|tape, w| loss(tape, w, &fixed), &w1, 1e-5)?;
    println!("max relative err  {err:.2e}");
    Ok(())
}
