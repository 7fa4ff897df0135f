use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::{finite_diff_check, Array};
use crate::fusion::FusionMode;

fn random(seed: u64, shape: &[usize]) -> Array<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Array::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn small(kind: ArchKind) -> ArchSpec {
    ArchSpec {
        kind,
        d_model: 4,
        heads: 2,
        mlp_window: 3,
        seed: 5,
        ..ArchSpec::default()
    }
}

fn all_kinds() -> Vec<ArchKind> {
    let mut kinds = ArchKind::COMPARISON.to_vec();
    kinds.extend((1..=4).map(ArchKind::LstmVariant));
    kinds.extend((1..=5).map(ArchKind::TfVariant));
    kinds
}

fn tap_ids(kind: ArchKind) -> Vec<String> {
    small(kind).taps().unwrap().into_iter().map(|t| t.id).collect()
}

#[test]
fn variant_tap_sets() {
    let tf5 = small(ArchKind::TfVariant(5)).taps().unwrap();
    assert_eq!(tf5.len(), 6);
    let levels: Vec<(String, usize)> = tf5.into_iter().map(|t| (t.id, t.level)).collect();
    let expect = [
        ("decoder.L4", 0),
        ("decoder.L3", 1),
        ("decoder.L2", 2),
        ("decoder.L1", 3),
        ("encoder.L2", 4),
        ("encoder.L1", 5),
    ];
    assert_eq!(levels, expect.map(|(a, b)| (a.to_string(), b)).to_vec());

    assert_eq!(tap_ids(ArchKind::LstmVariant(1)), ["lstm.L1"]);
    assert_eq!(tap_ids(ArchKind::LstmVariant(2)), ["lstm.L2", "lstm.L1"]);
    assert_eq!(tap_ids(ArchKind::LstmVariant(3)), ["lstm.L3", "lstm.L2", "lstm.L1"]);
    assert_eq!(tap_ids(ArchKind::LstmVariant(4)), ["lstm.L3", "lstm.L2"]);
    assert_eq!(tap_ids(ArchKind::TfVariant(1)), ["decoder.L4", "decoder.L3"]);
    assert_eq!(tap_ids(ArchKind::TfVariant(2)), ["decoder.L4", "decoder.L2"]);
    assert_eq!(tap_ids(ArchKind::TfVariant(3)), ["decoder.L4", "decoder.L3", "decoder.L2"]);
    assert_eq!(tap_ids(ArchKind::TfVariant(4)).len(), 4);
    assert_eq!(tap_ids(ArchKind::PyramidLstm), tap_ids(ArchKind::LstmVariant(2)));
    assert_eq!(tap_ids(ArchKind::PyramidTransformer), tap_ids(ArchKind::TfVariant(5)));
    assert_eq!(tap_ids(ArchKind::PyramidGa), tap_ids(ArchKind::TfVariant(5)));
    assert_eq!(tap_ids(ArchKind::LstmBaseline), ["lstm.L2"]);
    assert_eq!(tap_ids(ArchKind::TransformerBaseline), ["decoder.L4"]);
}

#[test]
fn forward_exposes_exactly_the_taps() {
    let x = random(1, &[2, 5, 1]);
    for kind in all_kinds() {
        let m = build::<f64>(&small(kind)).unwrap();
        let out = m.run(&x).unwrap();
        let got: Vec<&String> = out.taps.keys().collect();
        let want = tap_ids(kind);
        assert_eq!(got, want.iter().collect::<Vec<_>>(), "{kind}");
    }
}

#[test]
fn kind_names_round_trip() {
    for kind in all_kinds().into_iter().chain([ArchKind::Separated]) {
        assert_eq!(kind.to_string().parse::<ArchKind>().unwrap(), kind);
        let json = serde_json::to_string(&kind).unwrap();
        assert_eq!(serde_json::from_str::<ArchKind>(&json).unwrap(), kind);
    }
    assert_eq!("LSTM-3".parse::<ArchKind>().unwrap(), ArchKind::LstmVariant(3));
    assert_eq!("pyramid-ga".parse::<ArchKind>().unwrap(), ArchKind::PyramidGa);
    for bad in ["lstm-5", "tf-0", "cnn", ""] {
        assert!(matches!(bad.parse::<ArchKind>(), Err(Error::Config(_))), "{bad}");
    }
    let err = serde_json::from_str::<ArchSpec>(r#"{"kind": "resnet"}"#).unwrap_err();
    assert!(err.to_string().contains("resnet"));
}

#[test]
fn invalid_specs_are_config_errors() {
    let mut s = small(ArchKind::LstmVariant(2));
    s.depth = Some(3);
    assert!(matches!(build::<f64>(&s), Err(Error::Config(_))));
    let mut s = small(ArchKind::TfVariant(1));
    s.decoder_layers = 3;
    assert!(matches!(build::<f64>(&s), Err(Error::Config(_))));
    let mut s = small(ArchKind::PyramidTransformer);
    s.heads = 3;
    assert!(matches!(build::<f64>(&s), Err(Error::Config(_))));
    let mut s = small(ArchKind::PyramidLstm);
    s.fusion.p = 0.5;
    assert!(matches!(build::<f64>(&s), Err(Error::Config(_))));
    assert!(matches!(build::<f64>(&small(ArchKind::Separated)), Err(Error::Config(_))));
    let mut s = small(ArchKind::Separated);
    s.depth = Some(1);
    assert!(matches!(build_network::<f64>(&s), Err(Error::Config(_))));
}

#[test]
fn shapes_for_every_kind() {
    let x = random(2, &[4, 16, 1]);
    for kind in all_kinds() {
        let m = build::<f64>(&small(kind)).unwrap();
        assert_eq!(m.run(&x).unwrap().y.shape(), vec![4, 16, 1], "{kind}");
    }
    let mut s = small(ArchKind::PyramidTransformer);
    s.d_in = 3;
    s.d_out = 2;
    let m = build::<f64>(&s).unwrap();
    assert_eq!(m.run(&random(3, &[2, 7, 3])).unwrap().y.shape(), vec![2, 7, 2]);
    assert!(matches!(m.run(&random(3, &[2, 7, 2])), Err(Error::Dimension { .. })));
}

#[test]
fn outputs_are_causal() {
    let x = random(4, &[1, 16, 1]);
    let mut bumped = x.clone();
    bumped.data[10] += 0.7;
    for kind in all_kinds() {
        let m = build::<f64>(&small(kind)).unwrap();
        let a = m.run(&x).unwrap().y.to_vec();
        let b = m.run(&bumped).unwrap().y.to_vec();
        assert_eq!(a[..10], b[..10], "{kind}");
        assert_ne!(a[10], b[10], "{kind}");
    }
}

#[test]
fn unit_decay_matches_equal_average() {
    let x = random(6, &[2, 6, 1]);
    let mut weighted = small(ArchKind::PyramidLstm);
    weighted.fusion = FusionConfig {
        mode: FusionMode::WeightedStacked,
        p: 1.0,
    };
    let mut average = weighted.clone();
    average.fusion.mode = FusionMode::EqualAverage;
    let a = build::<f64>(&weighted).unwrap().run(&x).unwrap();
    let b = build::<f64>(&average).unwrap().run(&x).unwrap();
    assert_eq!(a.y.to_vec(), b.y.to_vec());
    // head(f1/2 + f2/2) computed by hand from the taps
    let m = build::<f64>(&weighted).unwrap();
    let s = crate::params::Session::new(m.store(), false);
    let xt = x.to_tensor(s.tape(), false);
    let out = m.forward(&s, &xt).unwrap();
    let mean = out.taps["lstm.L1"].add(&out.taps["lstm.L2"]).unwrap().scale(0.5);
    let head = m.store().find("head.weight").unwrap();
    let bias = m.store().find("head.bias").unwrap();
    let y = mean
        .matmul(s.param(head))
        .unwrap()
        .add(&s.param(bias).expand(&[2, 6]).unwrap())
        .unwrap();
    for (u, v) in y.to_vec().iter().zip(a.y.to_vec()) {
        assert!((u - v).abs() <= 1e-15);
    }
}

#[test]
fn huge_decay_reduces_to_the_deepest_tap() {
    let mut s = small(ArchKind::PyramidLstm);
    s.fusion.p = 1e6;
    let m = build::<f64>(&s).unwrap();
    let w: Vec<f64> = m.fusion().weights().unwrap();
    assert!(w[0] > 0.999999 && w[1] < 1e-6, "{w:?}");
    let x = random(7, &[1, 8, 1]);
    let mut serial = s.clone();
    serial.kind = ArchKind::LstmBaseline;
    let a = m.run(&x).unwrap().y.to_vec();
    let b = build::<f64>(&serial).unwrap().run(&x).unwrap().y.to_vec();
    for (u, v) in a.iter().zip(&b) {
        assert!((u - v).abs() < 1e-5);
    }
}

#[test]
fn rebuild_is_deterministic() {
    for kind in all_kinds() {
        let a = build::<f64>(&small(kind)).unwrap();
        let b = build::<f64>(&small(kind)).unwrap();
        assert_eq!(a.store().values(), b.store().values(), "{kind}");
    }
    let mut other = small(ArchKind::PyramidLstm);
    other.seed = 6;
    assert_ne!(
        build::<f64>(&other).unwrap().store().values(),
        build::<f64>(&small(ArchKind::PyramidLstm)).unwrap().store().values()
    );
}

#[test]
fn full_model_gradients() {
    let x = random(8, &[2, 4, 1]);
    let y = random(9, &[2, 4, 1]);
    for kind in all_kinds() {
        let mut spec = small(kind);
        spec.d_model = if matches!(kind, ArchKind::LstmBaseline | ArchKind::PyramidLstm | ArchKind::LstmVariant(_)) {
            3
        } else {
            4
        };
        let net = build_network::<f64>(&spec).unwrap();
        let err = finite_diff_check(
            |tape, leaves| {
                let s = crate::params::Session::from_leaves(tape, leaves);
                net.loss(&s, &x.to_tensor(tape, false), &y.to_tensor(tape, false))
            },
            &net.params().values(),
            2e-5,
        )
        .unwrap();
        assert!(err <= 1e-4, "{kind}: {err}");
    }
}

#[test]
fn separated_gradients() {
    // detach hides the extractor from the probe losses, so the check is split:
    // the live loss over every parameter, the full loss over the heads alone
    let x = random(16, &[2, 4, 1]);
    let y = random(17, &[2, 4, 1]);
    for extractor in [ExtractorKind::Lstm, ExtractorKind::Transformer] {
        let mut spec = small(ArchKind::Separated);
        spec.extractor = extractor;
        let net = build_network::<f64>(&spec).unwrap();
        let values = net.params().values();
        let live = finite_diff_check(
            |tape, leaves| {
                let s = crate::params::Session::from_leaves(tape, leaves);
                crate::autodiff::mse(&net.predict(&s, &x.to_tensor(tape, false))?, &y.to_tensor(tape, false))
            },
            &values,
            2e-5,
        )
        .unwrap();
        assert!(live <= 1e-4, "{extractor:?} live: {live}");

        let heads: Vec<usize> = net
            .params()
            .iter()
            .enumerate()
            .filter(|(_, p)| p.name.starts_with("head."))
            .map(|(i, _)| i)
            .collect();
        let head_values: Vec<Array<f64>> = heads.iter().map(|&i| values[i].clone()).collect();
        let full = finite_diff_check(
            |tape, leaves| {
                let mut all: Vec<_> = values.iter().map(|v| v.to_tensor(tape, false)).collect();
                for (&i, l) in heads.iter().zip(leaves) {
                    all[i] = l.clone();
                }
                let s = crate::params::Session::from_leaves(tape, &all);
                net.loss(&s, &x.to_tensor(tape, false), &y.to_tensor(tape, false))
            },
            &head_values,
            2e-5,
        )
        .unwrap();
        assert!(full <= 1e-4, "{extractor:?} heads: {full}");
    }
}

#[test]
fn mixed_widths_are_projected() {
    let mut s = small(ArchKind::PyramidLstm);
    s.depth = Some(3);
    s.layer_widths = Some(vec![2, 5, 3]);
    let m = build::<f64>(&s).unwrap();
    assert!(m.store().find("project.lstm.L1.weight").is_some());
    assert!(m.store().find("project.lstm.L2.weight").is_some());
    assert!(m.store().find("project.lstm.L3.weight").is_none());
    assert_eq!(m.param_count(), s.expected_param_count().unwrap());
    let out = m.run(&random(10, &[1, 4, 1])).unwrap();
    assert_eq!(out.taps["lstm.L2"].shape(), vec![1, 4, 5]);
    assert_eq!(out.y.shape(), vec![1, 4, 1]);
}

#[test]
fn concat_head_sees_all_taps() {
    let mut s = small(ArchKind::TfVariant(5));
    s.fusion.mode = FusionMode::Concat;
    let m = build::<f64>(&s).unwrap();
    let head = m.store().find("head.weight").unwrap();
    assert_eq!(m.store().get(head).value.shape, vec![24, 1]);
    assert_eq!(m.param_count(), s.expected_param_count().unwrap());
}

#[test]
fn non_finite_values_name_the_layer() {
    let mut m = build::<f64>(&small(ArchKind::PyramidLstm)).unwrap();
    let id = m.store().find("lstm.1.bias").unwrap();
    m.store_mut().get_mut(id).value.data[0] = f64::NAN;
    match m.run(&random(11, &[1, 3, 1])) {
        Err(Error::Numeric(msg)) => assert!(msg.contains("lstm.L2"), "{msg}"),
        other => panic!("expected numeric error, got {:?}", other.err()),
    }
}

#[test]
fn counts() {
    let mut mlp = ArchSpec::new(ArchKind::MlpBaseline);
    mlp.d_model = 8;
    mlp.mlp_window = 1;
    mlp.mlp_layers = 1;
    assert_eq!(mlp.expected_param_count().unwrap(), 25);
    assert_eq!(build::<f64>(&mlp).unwrap().param_count(), 25);

    let mut kinds = all_kinds();
    kinds.push(ArchKind::Separated);
    for kind in kinds {
        for seed in [0, 1] {
            let mut s = small(kind);
            s.seed = seed;
            let net = build_network::<f64>(&s).unwrap();
            assert_eq!(param_count(net.as_ref()), s.expected_param_count().unwrap(), "{kind}");
        }
    }
}

#[test]
fn capacity_matching() {
    let base = ArchSpec::new(ArchKind::PyramidLstm);
    let mut plain = ArchSpec::new(ArchKind::LstmBaseline);
    plain.d_model = 3;
    let w = match_capacity(&base, &plain).unwrap();
    plain.d_model = w;
    let (a, b) = (
        base.expected_param_count().unwrap() as f64,
        plain.expected_param_count().unwrap() as f64,
    );
    assert!((a - b).abs() / a <= 0.1);

    // counting oracle: no width is closer than the one returned
    let tf = ArchSpec::new(ArchKind::TransformerBaseline);
    let target = ArchSpec::new(ArchKind::PyramidGa).expected_param_count().unwrap() as f64;
    let w = match_capacity(&ArchSpec::new(ArchKind::PyramidGa), &tf).unwrap();
    let gap = |d: usize| {
        let mut s = tf.clone();
        s.d_model = d;
        s.expected_param_count().map(|c| (c as f64 - target).abs()).unwrap_or(f64::INFINITY)
    };
    for d in 1..200 {
        assert!(gap(w) <= gap(d));
    }
    assert!(gap(w) / target <= 0.1);

    let tiny = small(ArchKind::MlpBaseline);
    let mut huge = ArchSpec::new(ArchKind::PyramidTransformer);
    huge.heads = 1;
    huge.encoder_layers = 60;
    assert!(matches!(match_capacity(&tiny, &huge), Err(Error::Config(_))));
}

#[test]
fn separated_probe_losses_leave_extractor_untouched() {
    for extractor in [ExtractorKind::Lstm, ExtractorKind::Transformer] {
        let spec = SeparatedNetSpec {
            extractor,
            depth: 3,
            d_in: 1,
            d_out: 1,
            d_model: 4,
            heads: 2,
            d_ff: 8,
            p: 2.0,
            seed: 12,
        };
        let net = build_separated::<f64>(&spec).unwrap();
        let x = random(13, &[2, 6, 1]);
        let y = random(14, &[2, 6, 1]);
        let s = crate::params::Session::new(net.store(), true);
        let (xt, yt) = (x.to_tensor(s.tape(), false), y.to_tensor(s.tape(), false));
        let out = net.outputs(&s, &xt).unwrap();
        let mut probe_loss = crate::autodiff::mse(&out.multi, &yt).unwrap();
        for p in &out.probes {
            probe_loss = probe_loss.add(&crate::autodiff::mse(p, &yt).unwrap()).unwrap();
        }
        probe_loss.backward().unwrap();
        let mut touched_heads = 0;
        for (i, p) in net.store().iter().enumerate() {
            let g = s.param(crate::params::ParamId(i)).grad().unwrap_or_default();
            if net.is_extractor_param(&p.name) {
                assert!(g.iter().all(|&v| v == 0.0), "{}", p.name);
            } else if g.iter().any(|&v| v != 0.0) {
                touched_heads += 1;
            }
        }
        // three probes and the multi-level head, weights and biases
        assert_eq!(touched_heads, 8);

        // deepest probe reads the live feature; multi head reads the stack
        let deepest = out.features.last().unwrap().to_vec();
        let live_in = out.features[2].to_vec();
        assert_eq!(deepest, live_in);
        let w = net.weights();
        assert!((w[2] - 4.0 / 7.0).abs() < 1e-12 && (w[0] - 1.0 / 7.0).abs() < 1e-12);
        let stacked = crate::fusion::weighted_stack(&out.features, w).unwrap();
        let mh = net.store().find("head.multi.weight").unwrap();
        let mb = net.store().find("head.multi.bias").unwrap();
        let expect = stacked
            .matmul(s.param(mh))
            .unwrap()
            .add(&s.param(mb).expand(&[2, 6]).unwrap())
            .unwrap()
            .to_vec();
        assert_eq!(expect, out.multi.to_vec());
    }
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let x = random(15, &[1, 5, 1]);
    for kind in [ArchKind::PyramidGa, ArchKind::MlpBaseline, ArchKind::Separated] {
        let mut spec = small(kind);
        spec.fusion.p = 3.0;
        let net = build_network::<f64>(&spec).unwrap();
        save_checkpoint(net.as_ref(), &path).unwrap();
        let back = load_checkpoint::<f64>(&path).unwrap();
        assert_eq!(back.spec(), net.spec());
        assert_eq!(back.params().values(), net.params().values());
        let run = |n: &dyn Network<f64>| {
            let s = crate::params::Session::new(n.params(), false);
            n.predict(&s, &x.to_tensor(s.tape(), false)).unwrap().to_vec()
        };
        assert_eq!(run(net.as_ref()), run(back.as_ref()));
    }
    let ckpt = read_checkpoint(&path).unwrap();
    assert_eq!(ckpt.spec.kind, ArchKind::Separated);

    let mut bytes = std::fs::read(&path).unwrap();
    bytes.truncate(bytes.len() - 3);
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(read_checkpoint(&path), Err(Error::Format(_))));
    std::fs::write(&path, b"garbage!garbage!").unwrap();
    assert!(matches!(read_checkpoint(&path), Err(Error::Format(_))));
}
