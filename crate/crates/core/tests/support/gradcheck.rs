//! Finite-difference gradient checks shared by the gradient tests and the
//! acceptance runner. All checks run in f64 with central differences.

use dsi_core::model::{generic_loss, ModelConfig, Seq2SeqModel};
use dsi_core::numeric::{AttentionLayout, ParamStore, Tape, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-4;
pub const TOL: f64 = 1e-4;
pub const PROBES: usize = 100;

/// |a - n| / max(|a|, |n|, 1e-6). The floor keeps gradients that are zero up
/// to rounding from being compared purely on noise.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

type Inputs = Vec<(Vec<usize>, Vec<f64>)>;

/// Builds `sum(op(inputs) * w)` for a fixed random `w` and returns its value.
fn weighted_loss(
    inputs: &Inputs,
    weights_seed: u64,
    build: &dyn Fn(&mut Tape<f64>, &[Var]) -> Var,
) -> (Tape<f64>, Vec<Var>, Var) {
    let mut tape = Tape::<f64>::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|(s, d)| tape.leaf(s.clone(), d.clone()).unwrap())
        .collect();
    let out = build(&mut tape, &vars);
    let mut wrng = ChaCha8Rng::seed_from_u64(weights_seed);
    let shape = tape.shape(out).to_vec();
    let n: usize = shape.iter().product();
    let w = tape.leaf(shape, (0..n).map(|_| wrng.gen_range(-1.0..1.0)).collect()).unwrap();
    let prod = tape.mul(out, w).unwrap();
    let loss = tape.sum(prod);
    (tape, vars, loss)
}

pub fn check_op(
    name: &str,
    make_inputs: &dyn Fn(&mut ChaCha8Rng) -> Inputs,
    differentiable: &[usize],
    build: &dyn Fn(&mut Tape<f64>, &[Var]) -> Var,
) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6EAD ^ name.len() as u64);
    let mut worst = 0.0f64;
    for probe in 0..PROBES {
        let inputs = make_inputs(&mut rng);
        let wseed = rng.gen();
        let (mut tape, vars, loss) = weighted_loss(&inputs, wseed, build);
        tape.backward(loss).unwrap();
        let which = differentiable[rng.gen_range(0..differentiable.len())];
        let coord = rng.gen_range(0..inputs[which].1.len());
        let analytic = tape.grad(vars[which]).map_or(0.0, |g| g[coord]);
        let eval = |delta: f64| {
            let mut moved = inputs.clone();
            moved[which].1[coord] += delta;
            let (t, _, l) = weighted_loss(&moved, wseed, build);
            t.value(l)[0]
        };
        let numeric = (eval(H) - eval(-H)) / (2.0 * H);
        let err = rel_err(analytic, numeric);
        worst = worst.max(err);
        if err >= TOL {
            return Err(format!(
                "{name}: probe {probe} input {which}[{coord}]: analytic {analytic} vs numeric {numeric} (rel err {err:e})"
            ));
        }
    }
    Ok(worst)
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> (Vec<usize>, Vec<f64>) {
    (vec![r, c], rand_vec(rng, r * c))
}

/// Every differentiable tape op, each with its own probe set.
pub fn op_checks() -> Vec<(String, Result<f64, String>)> {
    let mut out: Vec<(String, Result<f64, String>)> = Vec::new();
    let mut run = |name: &str, r: Result<f64, String>| out.push((name.to_string(), r));
    run("matmul", check_op("matmul", &|r| vec![mat(r, 3, 4), mat(r, 4, 5)], &[0, 1], &|t, v| t.matmul(v[0], v[1]).unwrap()));
    run(
        "matmul_t",
        check_op("matmul_t", &|r| vec![mat(r, 3, 4), mat(r, 5, 4)], &[0, 1], &|t, v| t.matmul_t(v[0], v[1]).unwrap()),
    );
    run("add", check_op("add", &|r| vec![mat(r, 3, 4), mat(r, 3, 4)], &[0, 1], &|t, v| t.add(v[0], v[1]).unwrap()));
    run("mul", check_op("mul", &|r| vec![mat(r, 3, 4), mat(r, 3, 4)], &[0, 1], &|t, v| t.mul(v[0], v[1]).unwrap()));
    run(
        "add_bias",
        check_op("add_bias", &|r| vec![mat(r, 3, 4), (vec![4], rand_vec(r, 4))], &[0, 1], &|t, v| {
            t.add_bias(v[0], v[1]).unwrap()
        }),
    );
    run("scale", check_op("scale", &|r| vec![mat(r, 2, 3)], &[0], &|t, v| t.scale(v[0], -1.7)));
    run("sum", check_op("sum", &|r| vec![mat(r, 2, 3)], &[0], &|t, v| t.sum(v[0])));
    run(
        "gelu",
        check_op("gelu", &|r| vec![(vec![4, 4], (0..16).map(|_| r.gen_range(-3.0..3.0)).collect())], &[0], &|t, v| {
            t.gelu(v[0])
        }),
    );
    run(
        "layer_norm",
        check_op(
            "layer_norm",
            &|r| vec![mat(r, 3, 6), (vec![6], rand_vec(r, 6)), (vec![6], rand_vec(r, 6))],
            &[0, 1, 2],
            &|t, v| t.layer_norm(v[0], v[1], v[2], 1e-5).unwrap(),
        ),
    );
    run(
        "embedding",
        check_op("embedding", &|r| vec![mat(r, 5, 3)], &[0], &|t, v| t.embedding(v[0], &[4, 0, 4, 2]).unwrap()),
    );
    run(
        "dropout",
        check_op("dropout", &|r| vec![mat(r, 4, 5)], &[0], &|t, v| {
            // same mask on every evaluation
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            t.dropout(v[0], 0.3, &mut rng)
        }),
    );
    for (causal, padded) in [(false, false), (true, false), (false, true)] {
        let name = format!("attention causal={causal} padded={padded}");
        let r = attention_case(&name, causal, padded);
        run(&name, r);
    }
    run(
        "softmax_cross_entropy",
        check_op("softmax_cross_entropy", &|r| vec![mat(r, 4, 6)], &[0], &|t, v| {
            t.softmax_cross_entropy(v[0], &[0, 5, 2, 2]).unwrap()
        }),
    );
    run(
        "masked_cross_entropy",
        check_op("masked_cross_entropy", &|r| vec![mat(r, 4, 6)], &[0], &|t, v| {
            t.masked_cross_entropy(v[0], &[Some(1), None, Some(3), None]).unwrap()
        }),
    );
    out
}

fn attention_case(name: &str, causal: bool, padded: bool) -> Result<f64, String> {
    let (batch, q_len, k_len, heads, d) = (2, 3, if causal { 3 } else { 4 }, 2, 4);
    let layout = AttentionLayout {
        batch,
        q_len,
        k_len,
        heads,
        causal,
        // the second sequence has its last key padded out
        key_valid: if padded {
            (0..batch * k_len).map(|i| i < k_len || i % k_len != k_len - 1).collect()
        } else {
            Vec::new()
        },
    };
    check_op(
        name,
        &|r| vec![mat(r, batch * q_len, d), mat(r, batch * k_len, d), mat(r, batch * k_len, d)],
        &[0, 1, 2],
        &|t, v| t.attention(v[0], v[1], v[2], layout.clone()).unwrap(),
    )
}

/// The full two-layer encoder-decoder loss on a padded batch, probing
/// random parameter coordinates.
pub fn seq2seq_check() -> Result<f64, String> {
    let config = ModelConfig {
        num_layers: 2,
        d_model: 8,
        num_heads: 2,
        d_ff: 16,
        vocab_size: 20,
        max_src_len: 6,
        max_tgt_len: 4,
        dropout_rate: 0.0,
    };
    let model = Seq2SeqModel::new(config.clone(), 5).unwrap();
    // padded batch: second source and target are shorter
    let src = vec![vec![5, 9, 12, 3, 2], vec![7, 8, 2]];
    let tgt = vec![vec![4, 6, 2], vec![11, 2]];
    let mut params: ParamStore<f64> = model.params().cast();
    let loss_of = |p: &ParamStore<f64>| {
        let (tape, loss) = generic_loss(&config, p, &src, &tgt).unwrap();
        tape.value(loss)[0]
    };
    let (mut tape, loss) = generic_loss(&config, &params, &src, &tgt).unwrap();
    tape.backward(loss).unwrap();
    params.accumulate_grads(&tape);
    let ids: Vec<_> = params.iter().map(|(id, name, t)| (id, name.to_string(), t.numel())).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst = 0.0f64;
    for probe in 0..PROBES {
        let (id, name, numel) = ids[rng.gen_range(0..ids.len())].clone();
        let coord = rng.gen_range(0..numel);
        let analytic = params.get(id).grad().unwrap()[coord];
        let mut moved = params.clone();
        moved.get_mut(id).data_mut()[coord] += H;
        let up = loss_of(&moved);
        moved.get_mut(id).data_mut()[coord] -= 2.0 * H;
        let down = loss_of(&moved);
        let numeric = (up - down) / (2.0 * H);
        let err = rel_err(analytic, numeric);
        worst = worst.max(err);
        if err >= TOL {
            return Err(format!("probe {probe} {name}[{coord}]: analytic {analytic} vs numeric {numeric} ({err:e})"));
        }
    }
    Ok(worst)
}
