//! Worked input/output cases for every public operation.

use std::collections::BTreeMap;

use mustcnn::data::{
    collapse_ssp, parse_dataset, solvent_labels, split_dataset, write_dataset, SequenceRecord,
    SolventMode, TaskScheme,
};
use mustcnn::eval::{ConfusionMatrix, ThroughputReport};
use mustcnn::layers::{
    Conv1dLayer, DropoutLayer, LinearLayer, LookupTable, MaxPoolLayer, Mode, Nonlinearity,
    NonlinearityKind, Param,
};
use mustcnn::model::{
    checkpoint_read, checkpoint_write, nll_loss, predict_labels, softmax_rows, ConvBlock,
    ConvStack, Model, ModelConfig, Route, TaskLabels, TaskLogits, TaskSelector,
};
use mustcnn::stitch::{dense_batched, shift_expand, stitch_merge, StitchPlan};
use mustcnn::train::{sgd_step, OptimState};
use mustcnn::{ErrorClass, Rng, Tensor};

fn t(shape: &[usize], data: &[f64]) -> Tensor {
    Tensor::from_vec(shape, data.to_vec()).unwrap()
}

fn close(a: f64, b: f64, tol: f64) {
    assert!((a - b).abs() <= tol, "{a} vs {b}");
}

// tensors

#[test]
fn tensor_new_fills() {
    let z = Tensor::new(&[2, 3], 0.0).unwrap();
    assert_eq!(z.shape(), [2, 3]);
    assert!(z.data().iter().all(|&v| v == 0.0));
    assert_eq!(Tensor::new(&[1], 7.5).unwrap().data(), [7.5]);
    assert_eq!(Tensor::new(&[0], 0.0).unwrap_err().class(), ErrorClass::Shape);
}

#[test]
fn rng_uniform_cases() {
    let a = Rng::new(42).uniform(-1.0, 2.0, &[4, 5]).unwrap();
    let b = Rng::new(42).uniform(-1.0, 2.0, &[4, 5]).unwrap();
    assert_eq!(a, b);
    let u = Rng::new(7).uniform(0.0, 1.0, &[100_000]).unwrap();
    let mean = u.data().iter().sum::<f64>() / 1e5;
    close(mean, 0.5, 0.01);
    assert_eq!(
        Rng::new(1).uniform(1.0, 1.0, &[2]).unwrap_err().class(),
        ErrorClass::Range
    );
}

#[test]
fn map_elementwise_cases() {
    assert_eq!(t(&[2], &[1.0, -2.0]).map(|x| -x).unwrap().data(), [-1.0, 2.0]);
    assert_eq!(t(&[1], &[3.0]).map(|x| x).unwrap().data(), [3.0]);
    assert_eq!(
        t(&[1], &[0.0]).map(|x| 1.0 / x).unwrap_err().class(),
        ErrorClass::Numeric
    );
}

// layers

fn conv(w: &[f64], b: &[f64], n_out: usize, n_in: usize) -> Conv1dLayer {
    let k = w.len() / (n_out * n_in);
    Conv1dLayer::from_params(t(&[n_out, n_in, k], w), t(&[n_out], b)).unwrap()
}

#[test]
fn conv_forward_cases() {
    let mut c = conv(&[1.0, 0.0, -1.0], &[0.0], 1, 1);
    let y = c.forward(&t(&[1, 4, 1], &[1.0, 2.0, 3.0, 4.0])).unwrap();
    assert_eq!(y.data(), [-2.0, -2.0]);

    let mut c = conv(&[0.0; 3], &[5.0], 1, 1);
    let y = c.forward(&t(&[1, 7, 1], &[3.0, -1.0, 2.0, 8.0, 0.5, 1.0, 9.0])).unwrap();
    assert!(y.data().iter().all(|&v| v == 5.0));

    let mut rng = Rng::new(3);
    let mut c = Conv1dLayer::new(2, 3, 5, &mut rng).unwrap();
    let x = rng.uniform(-1.0, 1.0, &[1, 10, 2]).unwrap();
    assert_eq!(c.forward(&x).unwrap().shape(), [1, 6, 3]);
    let short = rng.uniform(-1.0, 1.0, &[1, 4, 2]).unwrap();
    assert_eq!(c.forward(&short).unwrap_err().class(), ErrorClass::Geometry);
}

#[test]
fn conv_backward_cases() {
    let mut rng = Rng::new(4);
    let mut c = Conv1dLayer::new(2, 2, 3, &mut rng).unwrap();
    let x = rng.uniform(-1.0, 1.0, &[1, 6, 2]).unwrap();
    let y = c.forward(&x).unwrap();
    let g = c.backward(&y.zeros_like()).unwrap();
    assert!(g.data().iter().all(|&v| v == 0.0));
    assert!(c.params().iter().all(|p| p.grad.data().iter().all(|&v| v == 0.0)));

    let mut c = conv(&[0.3, -0.2, 0.7], &[0.1], 1, 1);
    c.forward(&t(&[1, 4, 1], &[1.0, 2.0, 3.0, 4.0])).unwrap();
    c.backward(&t(&[1, 2, 1], &[1.0, 1.0])).unwrap();
    assert_eq!(c.params()[1].grad.data(), [2.0]);

    let wrong = t(&[1, 3, 1], &[1.0, 1.0, 1.0]);
    assert_eq!(c.backward(&wrong).unwrap_err().class(), ErrorClass::Geometry);
}

#[test]
fn maxpool_cases() {
    let mut p = MaxPoolLayer::new(2).unwrap();
    assert_eq!(p.forward(&t(&[1, 4, 1], &[1.0, 3.0, 2.0, 5.0])).unwrap().data(), [3.0, 5.0]);
    assert_eq!(p.forward(&t(&[1, 4, 1], &[2.5; 4])).unwrap().data(), [2.5, 2.5]);
    let mut id = MaxPoolLayer::new(1).unwrap();
    assert_eq!(id.forward(&t(&[1, 3, 1], &[4.0, -1.0, 2.0])).unwrap().data(), [4.0, -1.0, 2.0]);
    assert_eq!(
        p.forward(&t(&[1, 1, 1], &[1.0])).unwrap_err().class(),
        ErrorClass::Geometry
    );

    p.forward(&t(&[1, 2, 1], &[1.0, 3.0])).unwrap();
    assert_eq!(p.backward(&t(&[1, 1, 1], &[0.7])).unwrap().data(), [0.0, 0.7]);
    p.forward(&t(&[1, 2, 1], &[2.0, 2.0])).unwrap();
    assert_eq!(p.backward(&t(&[1, 1, 1], &[0.7])).unwrap().data(), [0.7, 0.0]);
    assert_eq!(
        p.backward(&t(&[1, 2, 1], &[1.0, 1.0])).unwrap_err().class(),
        ErrorClass::Geometry
    );
}

#[test]
fn nonlinearity_cases() {
    let relu = Nonlinearity::new(NonlinearityKind::Relu);
    assert_eq!(relu.apply(-3.0), 0.0);
    assert_eq!(relu.apply(2.0), 2.0);
    let prelu = Nonlinearity::with_alpha(NonlinearityKind::Prelu, 0.25);
    assert_eq!(prelu.apply(-2.0), -0.5);
    assert_eq!(Nonlinearity::new(NonlinearityKind::Tanh).apply(0.0), 0.0);
    assert_eq!(Nonlinearity::new(NonlinearityKind::Prelu).alpha_value(), 0.25);
}

#[test]
fn dropout_cases() {
    let mut rng = Rng::new(5);
    let x = rng.uniform(-1.0, 1.0, &[3, 4]).unwrap();
    let mut none = DropoutLayer::new(0.0).unwrap();
    assert_eq!(none.forward(&x, Mode::Train, &mut rng).unwrap(), x);
    let mut half = DropoutLayer::new(0.5).unwrap();
    assert_eq!(half.forward(&x, Mode::Eval, &mut rng).unwrap(), x);

    let ones = Tensor::new(&[100_000], 1.0).unwrap();
    let out = half.forward(&ones, Mode::Train, &mut rng).unwrap();
    let mean = out.data().iter().sum::<f64>() / 1e5;
    close(mean, 1.0, 0.02);

    for bad in [1.0, 1.5, -0.1] {
        assert_eq!(DropoutLayer::new(bad).unwrap_err().class(), ErrorClass::Config);
    }
}

#[test]
fn lookup_cases() {
    let mut lt = LookupTable::from_table(t(&[3, 2], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0])).unwrap();
    assert_eq!(lt.forward(&[0]).unwrap().data(), [1.0, 2.0]);
    assert_eq!(lt.forward(&[2, 0]).unwrap().data(), [5.0, 6.0, 1.0, 2.0]);
    assert_eq!(lt.forward(&[3]).unwrap_err().class(), ErrorClass::Data);
}

#[test]
fn linear_cases() {
    let mut id = LinearLayer::from_params(
        t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]),
        t(&[2], &[0.0, 0.0]),
    )
    .unwrap();
    let x = t(&[3, 2], &[1.0, -2.0, 0.5, 4.0, 3.0, 3.0]);
    assert_eq!(id.forward(&x).unwrap(), x);

    let mut ll = LinearLayer::from_params(t(&[1, 2], &[2.0, 3.0]), t(&[1], &[1.0])).unwrap();
    assert_eq!(ll.forward(&t(&[1, 2], &[1.0, 1.0])).unwrap().data(), [6.0]);
    assert_eq!(
        ll.forward(&t(&[1, 3], &[1.0, 1.0, 1.0])).unwrap_err().class(),
        ErrorClass::Geometry
    );
}

// stitch

#[test]
fn plan_cases() {
    assert_eq!(StitchPlan::new(20, &[2, 2, 2], &[3, 3, 3]).unwrap().copies(), 8);
    let one = StitchPlan::new(5, &[1], &[3]).unwrap();
    assert_eq!(one.copies(), 1);
    let p = StitchPlan::new(6, &[2], &[3]).unwrap();
    assert_eq!((p.copies(), p.padded_len()), (2, 8));
    assert_eq!(StitchPlan::new(6, &[2, 3], &[3, 5]).unwrap().copies(), 6);
    assert_eq!(
        StitchPlan::new(6, &[2], &[4]).unwrap_err().class(),
        ErrorClass::Config
    );
}

#[test]
fn shift_expand_cases() {
    let one = StitchPlan::new(3, &[1], &[3]).unwrap();
    let b = shift_expand(&t(&[3, 1], &[1.0, 2.0, 3.0]), &one).unwrap();
    assert_eq!(b.data.shape()[0], 1);
    let p = one.padded_len();
    let mut want = vec![1.0, 2.0, 3.0];
    want.resize(p, 0.0);
    assert_eq!(b.data.data(), want.as_slice());

    let plan = StitchPlan::new(2, &[2], &[3]).unwrap();
    assert_eq!(plan.padded_len(), 4);
    let (a, bb) = (1.5, -2.5);
    let b = shift_expand(&t(&[2, 1], &[a, bb]), &plan).unwrap();
    assert_eq!(b.data.shape(), [2, 4, 1]);
    assert_eq!(b.data.data(), [a, bb, 0.0, 0.0, 0.0, a, bb, 0.0]);

    assert_eq!(
        shift_expand(&t(&[3, 1], &[1.0, 2.0, 3.0]), &plan).unwrap_err().class(),
        ErrorClass::Geometry
    );
}

#[test]
fn stitch_merge_cases() {
    let one = StitchPlan::new(3, &[1], &[3]).unwrap();
    let w = one.padded_len();
    let strided: Vec<f64> = (0..w).map(|i| i as f64 + 10.0).collect();
    let out = stitch_merge(&t(&[1, w, 1], &strided), &one).unwrap();
    assert_eq!(out.data(), &strided[..3]);

    let plan = StitchPlan::new(4, &[2], &[3]).unwrap();
    let (a0, a1, b0, b1) = (1.0, 2.0, 3.0, 4.0);
    let out = stitch_merge(&t(&[2, 2, 1], &[a0, a1, b0, b1]), &plan).unwrap();
    assert_eq!(out.data(), [b0, a0, b1, a1]);

    assert_eq!(
        stitch_merge(&t(&[3, 2, 1], &[0.0; 6]), &plan).unwrap_err().class(),
        ErrorClass::Geometry
    );
}

#[test]
fn dense_batched_single_copy_calls_once() {
    let plan = StitchPlan::new(5, &[1], &[3]).unwrap();
    let mut calls = 0;
    let mut net = |x: &Tensor, _: &[usize], _: &StitchPlan| {
        calls += 1;
        Ok(x.clone())
    };
    let x = t(&[5, 1], &[1.0, 2.0, 3.0, 4.0, 5.0]);
    assert_eq!(dense_batched(&x, &plan, &mut net).unwrap(), x);
    assert_eq!(calls, 1);
}

#[test]
fn dense_output_of_linear_network_superposes() {
    // PReLU with unit slope and unit pools make every block linear.
    let mut rng = Rng::new(8);
    let blocks = (0..2)
        .map(|i| {
            let mut b = ConvBlock::new(if i == 0 { 3 } else { 4 }, 4, 3, 1, NonlinearityKind::Prelu, 0.0, &mut rng)
                .unwrap();
            b.nonlin.alpha.value = t(&[1], &[1.0]);
            b.conv.bias.value.fill(0.0);
            b
        })
        .collect();
    let mut stack = ConvStack::new(blocks, Route::InputOnce);
    let plan = StitchPlan::new(11, &[1, 1], &[3, 3]).unwrap();
    let x = rng.uniform(-1.0, 1.0, &[11, 3]).unwrap();
    let y = rng.uniform(-1.0, 1.0, &[11, 3]).unwrap();
    let mut sum = x.clone();
    let mut scaled = y.clone();
    scaled.data_mut().iter_mut().for_each(|v| *v *= -2.5);
    sum.add_assign(&scaled).unwrap();

    let mut run = |f: &Tensor| stack.forward_dense(f, &plan, Mode::Eval, &mut Rng::new(0)).unwrap();
    let (fx, fy, fsum) = (run(&x), run(&y), run(&sum));
    for ((a, b), c) in fx.data().iter().zip(fy.data()).zip(fsum.data()) {
        close(a - 2.5 * b, *c, 1e-12);
    }
}

// model

fn two_class_config() -> ModelConfig {
    ModelConfig {
        conv_layers: 1,
        hidden_units: 4,
        kernel_size: 3,
        pool_size: 1,
        input_dropout: 0.0,
        dropout: 0.0,
        nonlinearity: NonlinearityKind::Relu,
        embed_dim: 2,
        tasks: vec![TaskScheme::by_name("sar").unwrap()],
    }
}

#[test]
fn model_build_cases() {
    let m = Model::build(ModelConfig::small(), &mut Rng::new(1)).unwrap();
    assert_eq!(m.stack.blocks.len(), 3);
    assert!(m.stack.blocks.iter().all(|b| b.conv.n_out() == 189 && b.conv.kernel_size() == 9));

    // lookup 21x2, conv 4x(2+20)x3 + 4, head 2x4 + 2
    let m = Model::build(two_class_config(), &mut Rng::new(1)).unwrap();
    assert_eq!(m.parameter_count(), 21 * 2 + (4 * 22 * 3 + 4) + (2 * 4 + 2));

    let bad = ModelConfig {
        kernel_size: 4,
        ..two_class_config()
    };
    assert_eq!(Model::build(bad, &mut Rng::new(1)).unwrap_err().class(), ErrorClass::Config);
}

fn small_test_config() -> ModelConfig {
    ModelConfig {
        hidden_units: 6,
        embed_dim: 3,
        ..ModelConfig::small()
    }
}

fn random_inputs(len: usize, rng: &mut Rng) -> (Vec<usize>, Tensor) {
    let idx = (0..len).map(|_| rng.below(21)).collect();
    (idx, rng.uniform(0.0, 1.0, &[len, 20]).unwrap())
}

#[test]
fn model_forward_cases() {
    let mut rng = Rng::new(2);
    let mut m = Model::build(small_test_config(), &mut rng).unwrap();
    for len in [1, 7, 30] {
        let (idx, pssm) = random_inputs(len, &mut rng);
        let a = m.forward(&idx, &pssm, Mode::Eval, &mut rng).unwrap();
        let b = m.forward(&idx, &pssm, Mode::Eval, &mut rng).unwrap();
        assert_eq!(a, b);
        let shapes: Vec<(&str, Vec<usize>)> =
            a.tasks.iter().map(|(n, l)| (n.as_str(), l.shape().to_vec())).collect();
        assert_eq!(
            shapes,
            [
                ("dssp", vec![len, 8]),
                ("ssp", vec![len, 3]),
                ("sar", vec![len, 2]),
                ("saa", vec![len, 2]),
            ]
        );
        assert!(a.tasks.iter().all(|(_, l)| l.data().iter().all(|v| v.is_finite())));
    }
    let (idx, _) = random_inputs(4, &mut rng);
    let pssm = Tensor::zeros(&[3, 20]).unwrap();
    assert!(m.forward(&idx, &pssm, Mode::Eval, &mut rng).is_err());
}

#[test]
fn softmax_cases() {
    let p = softmax_rows(&t(&[1, 3], &[0.0, 0.0, 0.0])).unwrap();
    p.data().iter().for_each(|&v| close(v, 1.0 / 3.0, 1e-15));
    let p = softmax_rows(&t(&[1, 2], &[1000.0, 0.0])).unwrap();
    close(p.data()[0], 1.0, 1e-15);
    close(p.data()[1], 0.0, 1e-15);
    let p = softmax_rows(&t(&[1, 2], &[2f64.ln(), 0.0])).unwrap();
    close(p.data()[0], 2.0 / 3.0, 1e-15);
    close(p.data()[1], 1.0 / 3.0, 1e-15);
    assert_eq!(
        softmax_rows(&t(&[1, 2], &[f64::NAN, 0.0])).unwrap_err().class(),
        ErrorClass::Numeric
    );
}

fn one_task(name: &str, logits: Tensor) -> TaskLogits {
    TaskLogits {
        tasks: vec![(name.to_string(), logits)],
    }
}

fn labels(name: &str, l: Vec<Option<usize>>) -> TaskLabels {
    BTreeMap::from([(name.to_string(), l)])
}

#[test]
fn nll_cases() {
    let confident = one_task("sar", t(&[1, 2], &[800.0, 0.0]));
    let (loss, _) = nll_loss(&confident, &labels("sar", vec![Some(0)]), &TaskSelector::All).unwrap();
    assert_eq!(loss, 0.0);

    let uniform = one_task("dssp", Tensor::zeros(&[1, 8]).unwrap());
    let (loss, _) = nll_loss(&uniform, &labels("dssp", vec![Some(3)]), &TaskSelector::All).unwrap();
    close(loss, 8f64.ln(), 1e-12);
    close(loss, 2.0794, 1e-4);

    let l = one_task("ssp", t(&[2, 3], &[0.3, -1.0, 2.0, 0.0, 0.5, 0.1]));
    let (loss, grad) = nll_loss(&l, &labels("ssp", vec![None, None]), &TaskSelector::All).unwrap();
    assert_eq!(loss, 0.0);
    assert!(grad.tasks[0].1.data().iter().all(|&v| v == 0.0));
}

#[test]
fn predict_labels_cases() {
    let dssp = TaskScheme::by_name("dssp").unwrap();
    let mut scores = Tensor::zeros(&[3, 8]).unwrap();
    for r in 0..3 {
        scores.set(&[r, 0], 1.0).unwrap();
    }
    let out = predict_labels(&one_task("dssp", scores), &[dssp]).unwrap();
    assert_eq!(out["dssp"], "HHH");

    let ssp = TaskScheme::by_name("ssp").unwrap();
    let tie = t(&[1, 3], &[0.0, 2.0, 2.0]);
    assert_eq!(predict_labels(&one_task("ssp", tie), &[ssp.clone()]).unwrap()["ssp"], "E");

    let mut rng = Rng::new(6);
    let rows = rng.uniform(-1.0, 1.0, &[5, 3]).unwrap();
    let manual: String = rows
        .data()
        .chunks(3)
        .map(|r| {
            let k = (0..3).fold(0, |b, i| if r[i] > r[b] { i } else { b });
            ssp.alphabet[k]
        })
        .collect();
    assert_eq!(predict_labels(&one_task("ssp", rows), &[ssp]).unwrap()["ssp"], manual);
}

#[test]
fn checkpoint_cases() {
    let mut rng = Rng::new(9);
    let mut m = Model::build(small_test_config(), &mut rng).unwrap();
    let (idx, pssm) = random_inputs(13, &mut rng);
    let before = m.forward(&idx, &pssm, Mode::Eval, &mut rng).unwrap();

    let mut bytes = Vec::new();
    checkpoint_write(&m, &mut bytes).unwrap();
    let mut back = checkpoint_read(bytes.as_slice()).unwrap();
    assert_eq!(back.config(), m.config());
    let orig: Vec<_> = m.params().into_iter().map(|(n, p)| (n, p.value.clone())).collect();
    let read: Vec<_> = back.params().into_iter().map(|(n, p)| (n, p.value.clone())).collect();
    assert_eq!(orig, read);
    assert_eq!(back.forward(&idx, &pssm, Mode::Eval, &mut rng).unwrap(), before);

    let mut corrupt = bytes.clone();
    corrupt[0] ^= 0xff;
    assert_eq!(
        checkpoint_read(corrupt.as_slice()).unwrap_err().class(),
        ErrorClass::Checkpoint
    );
}

// train

fn scalar_param(v: f64) -> Param {
    Param::new(t(&[1], &[v]))
}

fn step(p: &mut Param, g: f64, state: &mut OptimState) {
    p.grad = t(&[1], &[g]);
    sgd_step(&mut [p], state).unwrap();
}

#[test]
fn sgd_cases() {
    let mut p = scalar_param(1.0);
    let mut st = OptimState::new(0.1, 0.0, &[&p]).unwrap();
    step(&mut p, 2.0, &mut st);
    close(p.value.data()[0], 0.8, 1e-15);

    let mut p = scalar_param(1.0);
    let mut st = OptimState::new(0.0, 0.9, &[&p]).unwrap();
    step(&mut p, 5.0, &mut st);
    assert_eq!(p.value.data(), [1.0]);

    let mut p = scalar_param(0.0);
    let mut st = OptimState::new(0.1, 0.9, &[&p]).unwrap();
    step(&mut p, 1.0, &mut st);
    close(st.velocity()[0].data()[0], -0.1, 1e-15);
    close(p.value.data()[0], -0.1, 1e-15);
    step(&mut p, 1.0, &mut st);
    close(st.velocity()[0].data()[0], -0.19, 1e-15);
    close(p.value.data()[0], -0.29, 1e-15);
}

// data

const MINIMAL: &str = ">t1\nACD\n#pssm\n\
0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0\n\
0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0\n\
0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0\n\
#label dssp\nHHH\n";

#[test]
fn parse_cases() {
    let recs = parse_dataset(MINIMAL.as_bytes()).unwrap();
    assert_eq!(recs.len(), 1);
    assert_eq!((recs[0].id.as_str(), recs[0].seq_len()), ("t1", 3));
    assert_eq!(recs[0].label("dssp"), Some("HHH"));

    let mut out = Vec::new();
    write_dataset(&mut out, &recs).unwrap();
    assert_eq!(parse_dataset(out.as_slice()).unwrap(), recs);

    let short = MINIMAL.replacen("0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0\n", "", 1);
    let err = parse_dataset(short.as_bytes()).unwrap_err();
    assert_eq!(err.class(), ErrorClass::Data);
    assert!(err.to_string().contains("t1"), "{err}");
}

#[test]
fn encode_cases() {
    let rec = SequenceRecord::new("r", "AYBx", Tensor::zeros(&[4, 20]).unwrap(), BTreeMap::new()).unwrap();
    assert_eq!(rec.residues, "AYXX");
    let (idx, pssm) = rec.encode_features();
    assert_eq!(idx, [0, 19, 20, 20]);
    assert_eq!(idx.len(), rec.seq_len());
    assert_eq!(pssm, &rec.pssm);
}

#[test]
fn collapse_cases() {
    assert_eq!(collapse_ssp("G").unwrap(), "H");
    assert_eq!(collapse_ssp("B").unwrap(), "E");
    assert_eq!(collapse_ssp("ISTL").unwrap(), "CCCC");
    assert_eq!(collapse_ssp("H.E").unwrap(), "H.E");
    assert_eq!(collapse_ssp("HC").unwrap_err().class(), ErrorClass::Data);
}

#[test]
fn solvent_cases() {
    assert_eq!(solvent_labels(&[10.0, 1.0], SolventMode::Relative).unwrap(), "AI");
    assert_eq!(solvent_labels(&[0.0; 4], SolventMode::Relative).unwrap(), "IIII");
    assert_eq!(solvent_labels(&[0.2, 0.1], SolventMode::Absolute).unwrap(), "AI");
    assert_eq!(
        solvent_labels(&[1.0, -0.5], SolventMode::Absolute).unwrap_err().class(),
        ErrorClass::Data
    );
}

fn tiny_records(n: usize) -> Vec<SequenceRecord> {
    (0..n)
        .map(|i| SequenceRecord::new(format!("r{i}"), "AC", Tensor::zeros(&[2, 20]).unwrap(), BTreeMap::new()).unwrap())
        .collect()
}

#[test]
fn split_cases() {
    let s = split_dataset(tiny_records(10), [0.6, 0.2, 0.2], 1).unwrap();
    assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (6, 2, 2));
    let s = split_dataset(tiny_records(10), [0.8, 0.2, 0.0], 1).unwrap();
    assert!(s.test.is_empty());
    let a = split_dataset(tiny_records(10), [0.6, 0.2, 0.2], 77).unwrap();
    let b = split_dataset(tiny_records(10), [0.6, 0.2, 0.2], 77).unwrap();
    assert_eq!(a, b);
    assert_eq!(
        split_dataset(tiny_records(10), [0.5, 0.2, 0.2], 1).unwrap_err().class(),
        ErrorClass::Config
    );
}

// eval

fn matrix(task: &str) -> ConfusionMatrix {
    ConfusionMatrix::new(&TaskScheme::by_name(task).unwrap())
}

#[test]
fn confusion_cases() {
    let mut cm = matrix("dssp");
    cm.accumulate("HH", "HE").unwrap();
    let (h, e) = (0, 2);
    assert_eq!((cm.counts()[h][h], cm.counts()[h][e], cm.total()), (1, 1, 2));

    let mut cm = matrix("dssp");
    cm.accumulate(".H", "EH").unwrap();
    assert_eq!((cm.counts()[h][h], cm.total()), (1, 1));

    let mut twice = matrix("ssp");
    twice.accumulate("HEC", "HCC").unwrap();
    twice.accumulate("CE", "EE").unwrap();
    let mut once = matrix("ssp");
    once.accumulate("HECCE", "HCCEE").unwrap();
    assert_eq!(twice, once);

    assert_eq!(matrix("ssp").accumulate("HE", "H").unwrap_err().class(), ErrorClass::Data);
    assert_eq!(matrix("ssp").accumulate("HQ", "HH").unwrap_err().class(), ErrorClass::Data);
}

#[test]
fn qc_cases() {
    let mut cm = matrix("ssp");
    cm.accumulate("HECH", "HECH").unwrap();
    assert_eq!(cm.qc_accuracy().unwrap(), 1.0);

    let mut cm = matrix("sar");
    cm.accumulate("AAAIA", "AAAII").unwrap();
    assert_eq!(cm.counts(), [vec![3, 1], vec![0, 1]]);
    close(cm.qc_accuracy().unwrap(), 0.8, 1e-15);

    assert_eq!(matrix("sar").qc_accuracy().unwrap_err().class(), ErrorClass::Metric);
}

#[test]
fn prf1_cases() {
    let mut cm = matrix("dssp");
    cm.accumulate("HHE", "HEE").unwrap();
    let rows = cm.prf1().unwrap();
    let i = rows.iter().find(|r| r.class == 'I').unwrap();
    assert_eq!((i.precision, i.recall, i.f1, i.frequency), (0.0, 0.0, 0.0, 0.0));

    let mut cm = matrix("sar");
    let gold = format!("{}{}", "A".repeat(10), "I".repeat(10));
    let pred = format!("{}I{}A", "A".repeat(9), "I".repeat(9));
    cm.accumulate(&gold, &pred).unwrap();
    let a = &cm.prf1().unwrap()[0];
    close(a.precision, 0.9, 1e-15);
    close(a.recall, 0.9, 1e-15);
    close(a.f1, 0.9, 1e-15);

    let mut cm = matrix("sar");
    cm.accumulate("AAI", "AII").unwrap();
    let a = &cm.prf1().unwrap()[0];
    close(a.precision, 1.0, 1e-15);
    close(a.recall, 0.5, 1e-15);
    close(a.f1, 2.0 / 3.0, 1e-15);
}

#[test]
fn throughput_identity() {
    let r = ThroughputReport::new(2_500_000, 12.5);
    assert!(r.is_consistent());
    assert_eq!(r.ms_per_million, 12.5 * 1e9 / 2.5e6);
}
