use super::*;
use crate::rng::{rng_for, Stream};
use crate::search_space::OperationKind::*;
use rand::Rng;

fn random_image(b: usize, c: usize, h: usize, w: usize, seed: u64) -> Tensor {
    let mut rng = rng_for(seed, Stream::Synthetic, 99);
    Tensor::from_fn(&[b, c, h, w], |_| rng.random_range(-1.0..1.0))
}

fn all_conv3(n: usize, hidden: usize) -> ArchitectureSpec {
    ArchitectureSpec::uniform(Role::Generator, n, hidden, |t| match t {
        CellType::Encoding | CellType::Residual => (Conv3x3, Conv3x3),
        CellType::Decoding => (TransConv3x3, TransConv3x3),
    })
    .unwrap()
}

fn shapes_of(net: &Network, x: &Tensor, count: usize) -> Vec<usize> {
    let mut tape = Tape::new();
    let bound = net.params().bind(&mut tape, Trainable::NONE);
    let xv = tape.constant(x.clone());
    let h = net.forward_cells(&mut tape, &bound, xv, count).unwrap();
    tape.value(h).shape().to_vec()
}

#[test]
fn large_generator_encodes_256_to_64_planes() {
    let mut rng = rng_for(1, Stream::Init, 0);
    let net = Network::generator_supernet(11, 64, 3, &mut rng).unwrap();
    let x = random_image(1, 3, 256, 256, 1);
    assert_eq!(shapes_of(&net, &x, 1), vec![1, 64, 64, 64]);
}

#[test]
fn small_generator_shapes() {
    let mut rng = rng_for(2, Stream::Init, 0);
    let net = Network::generator_supernet(3, 8, 3, &mut rng).unwrap();
    let x = random_image(2, 3, 32, 32, 2);
    assert_eq!(shapes_of(&net, &x, 1), vec![2, 8, 8, 8]);
    let y = net.infer(&x).unwrap();
    assert_eq!(y.shape(), &[2, 3, 32, 32]);
    assert!(y.data().iter().all(|v| (-1.0..=1.0).contains(v)));
}

#[test]
fn alpha_slot_lengths_follow_operation_sets() {
    let mut rng = rng_for(3, Stream::Init, 0);
    let g = Network::generator_supernet(4, 4, 3, &mut rng).unwrap();
    let lens: Vec<usize> = g.slot_betas().iter().map(Vec::len).collect();
    assert_eq!(lens, vec![8, 8, 5, 5, 5, 5, 3, 3]);
    let d = Network::discriminator_supernet(4, 3, &mut rng).unwrap();
    let lens: Vec<usize> = d.slot_betas().iter().map(Vec::len).collect();
    assert_eq!(lens, vec![8; 4]);
    assert!(g.alpha_table().unwrap().cells.iter().all(|c| c.alpha.iter().flatten().all(|a| *a == 0.0)));
}

#[test]
fn supernet_rejects_bad_arguments() {
    let mut rng = rng_for(4, Stream::Init, 0);
    assert!(Network::generator_supernet(2, 8, 3, &mut rng).is_err());
    assert!(Network::generator_supernet(5, 1, 3, &mut rng).is_err());
    assert!(Network::discriminator_supernet(1, 3, &mut rng).is_err());
}

#[test]
fn discriminator_shapes_and_range() {
    let mut rng = rng_for(5, Stream::Init, 0);
    let d = Network::discriminator_supernet(6, 3, &mut rng).unwrap();
    let x = random_image(1, 3, 32, 32, 5);
    assert_eq!(shapes_of(&d, &x, 2), vec![1, 6, 2, 2]);
    let p = d.infer(&x).unwrap();
    assert!(p.is_scalar());
    assert!(p.item() > 0.0 && p.item() < 1.0);
    assert!(d.infer(&random_image(1, 3, 8, 8, 5)).is_err());
    assert!(d.infer(&random_image(1, 3, 24, 24, 5)).is_err());
}

#[test]
fn forward_rejects_channel_mismatch() {
    let mut rng = rng_for(6, Stream::Init, 0);
    let g = Network::generator_supernet(3, 4, 3, &mut rng).unwrap();
    assert!(g.infer(&random_image(1, 1, 16, 16, 6)).is_err());
    assert!(g.infer(&random_image(1, 3, 18, 18, 6)).is_err());
}

fn force_one_hot(table: &mut AlphaTable, pick: impl Fn(usize, usize, usize) -> usize) {
    for (i, cell) in table.cells.iter_mut().enumerate() {
        for (s, a) in cell.alpha.iter_mut().enumerate() {
            let k = pick(i, s, a.len());
            a.iter_mut().for_each(|v| *v = 0.0);
            a[k] = 30.0;
        }
    }
}

#[test]
fn one_hot_supernet_matches_extracted_discrete_network() {
    for seed in 0..3u64 {
        let mut rng = rng_for(seed, Stream::Init, 1);
        let mut g = Network::generator_supernet(4, 4, 3, &mut rng).unwrap();
        let mut table = g.alpha_table().unwrap();
        force_one_hot(&mut table, |i, s, n| (seed as usize + 3 * i + s) % n);
        g.set_alpha_table(&table).unwrap();
        assert!(g.slot_betas().iter().all(|b| b.iter().cloned().fold(0.0, f64::max) >= 1.0 - 1e-9));
        let spec = g.to_spec(4).unwrap();
        let discrete = g.extract_discrete(&spec).unwrap();
        assert_eq!(discrete.mode(), NetMode::Discrete);
        let x = random_image(1, 3, 16, 16, seed);
        let diff = g.infer(&x).unwrap().max_abs_diff(&discrete.infer(&x).unwrap());
        assert!(diff <= 1e-6, "seed {seed}: {diff}");

        let mut d = Network::discriminator_supernet(4, 3, &mut rng).unwrap();
        let mut table = d.alpha_table().unwrap();
        force_one_hot(&mut table, |i, s, n| (seed as usize * 5 + 2 * i + s) % n);
        d.set_alpha_table(&table).unwrap();
        let dd = d.extract_discrete(&d.to_spec(4).unwrap()).unwrap();
        let x = random_image(1, 3, 32, 32, seed + 10);
        let diff = d.infer(&x).unwrap().max_abs_diff(&dd.infer(&x).unwrap());
        assert!(diff <= 1e-6, "seed {seed}: {diff}");
    }
}

#[test]
fn uniform_mixture_is_mean_of_candidates() {
    let mut rng = rng_for(7, Stream::Init, 0);
    let g = Network::generator_supernet(3, 4, 3, &mut rng).unwrap();
    for (cell, input_channels, extent) in [(0usize, 3usize, 16usize), (1, 4, 4), (2, 4, 4)] {
        let slot = &g.cells[cell].slots[0];
        let mut tape = Tape::new();
        let bound = g.params().bind(&mut tape, Trainable::NONE);
        let x = tape.constant(random_image(1, input_channels, extent, extent, 7));
        let outs: Vec<Tensor> = slot
            .candidates
            .iter()
            .map(|c| {
                let v = Network::apply_candidate(&mut tape, &bound, c, x).unwrap();
                tape.value(v).clone()
            })
            .collect();
        let n = outs.len() as f64;
        let mut mean = Tensor::zeros(outs[0].shape());
        for o in &outs {
            mean.data_mut().iter_mut().zip(o.data()).for_each(|(m, v)| *m += v / n);
        }
        let m = tape.constant(mean);
        let normed = tape.instance_norm2d(m, NORM_EPS).unwrap();
        let expected = tape.relu(normed).unwrap();
        let mixed = g.apply_slot(&mut tape, &bound, slot, x).unwrap();
        assert!(tape.value(mixed).max_abs_diff(tape.value(expected)) < 1e-12);
    }
}

#[test]
fn discrete_network_from_uniform_alpha_builds_at_restored_hidden() {
    let table = AlphaTable::zeros(Role::Generator, 5).unwrap();
    let spec = crate::search_space::discretize(Role::Generator, 5, &table, 32).unwrap();
    let mut rng = rng_for(8, Stream::Init, 0);
    let net = Network::discrete(&spec, 32, 3, &mut rng).unwrap();
    assert_eq!(net.params().count(ParamGroup::Arch), 0);
    assert!(net.alpha_table().is_none());
    let y = net.infer(&random_image(1, 3, 16, 16, 8)).unwrap();
    assert_eq!(y.shape(), &[1, 3, 16, 16]);
}

#[test]
fn spec_size_matches_built_network() {
    let mut rng = rng_for(9, Stream::Init, 0);
    let specs = [
        all_conv3(5, 8),
        ArchitectureSpec::uniform(Role::Generator, 4, 8, |t| match t {
            CellType::Encoding => (MaxPool, Conv4x4),
            CellType::Residual => (DilConv5x5, Conv7x7),
            CellType::Decoding => (Bilinear, Nearest),
        })
        .unwrap(),
        ArchitectureSpec::uniform(Role::Discriminator, 2, 8, |_| (AvgPool, DilConv3x3)).unwrap(),
    ];
    for spec in &specs {
        for hidden in [3, 8] {
            let net = Network::discrete(spec, hidden, 3, &mut rng).unwrap();
            assert_eq!(spec_size_of(spec, hidden), net.size_report());
        }
    }
}

fn spec_size_of(spec: &ArchitectureSpec, hidden: usize) -> SizeReport {
    size::spec_size(spec, hidden, 3).unwrap()
}

#[test]
fn residual_cells_scale_quadratically() {
    let spec = all_conv3(6, 32);
    let small = spec_size_of(&spec, 32);
    let large = spec_size_of(&spec, 64);
    let ratio = large.component("cells.2").unwrap() as f64 / small.component("cells.2").unwrap() as f64;
    assert!((ratio - 4.0).abs() < 0.01, "{ratio}");
}

#[test]
fn eleven_cell_conv3_parameter_count_matches_hand_formula() {
    let h: u64 = 64;
    let encoding = (9 * 3 * h + h) + (9 * h * h + h);
    let residual = 9 * 2 * (9 * h * h + h);
    let decoding = (9 * h * h + h) + (9 * h * 3 + 3);
    let expected = encoding + residual + decoding;
    let report = spec_size_of(&all_conv3(11, 64), 64);
    assert_eq!(report.parameters, expected);
    assert_eq!(report.bytes, 4 * expected);
}

#[test]
fn baseline_size_anchor() {
    let mb = BaselineFamily::default().size_at(32).unwrap().megabytes();
    assert!((mb - 11.378).abs() / 11.378 < 0.02, "{mb}");
    let h = scale_hidden_to_target(&BaselineFamily::default(), 11_378_000).unwrap();
    assert!((31..=33).contains(&h), "{h}");
    let ratio = BaselineFamily::default().size_at(64).unwrap().bytes as f64
        / BaselineFamily::default().size_at(32).unwrap().bytes as f64;
    assert!((ratio - 4.0).abs() < 0.05, "{ratio}");
}

#[test]
fn baseline_closed_form_matches_built_network() {
    let mut rng = rng_for(10, Stream::Init, 0);
    let net = BaselineGenerator::new(4, 3, &mut rng).unwrap();
    assert_eq!(net.parameter_count(), baseline_parameter_count(4, 3));
    let y = net.infer(&random_image(1, 3, 32, 32, 10)).unwrap();
    assert_eq!(y.shape(), &[1, 3, 32, 32]);
    assert!(y.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    assert!(BaselineGenerator::new(1, 3, &mut rng).is_err());
}

#[test]
fn scale_hidden_fixed_point_and_nearest_endpoint() {
    let spec = all_conv3(7, 32);
    let at = |h| spec_size_of(&spec, h).bytes;
    assert_eq!(scale_hidden_to_target(&spec, at(32)).unwrap(), 32);
    let (a, b) = (at(32), at(33));
    assert_eq!(scale_hidden_to_target(&spec, a + (b - a) / 4).unwrap(), 32);
    assert_eq!(scale_hidden_to_target(&spec, b - (b - a) / 4).unwrap(), 33);
    assert_eq!(scale_hidden_to_target(&spec, at(1)).unwrap(), 1);
    assert!(scale_hidden_to_target(&spec, at(1) - 1).is_err());
}

#[test]
fn size_is_strictly_increasing_in_hidden() {
    let spec = all_conv3(4, 8);
    let sizes: Vec<u64> = (1..40).map(|h| spec_size_of(&spec, h).bytes).collect();
    assert!(sizes.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn degenerate_size_requests_are_rejected() {
    assert!(size::spec_size(&all_conv3(4, 8), 0, 3).is_err());
    assert!(BaselineFamily::default().size_at(0).is_err());
    assert!(layer_plan(Role::Generator, 2, 8, 3).is_err());
}

#[test]
fn doubling_hidden_roughly_quadruples_bytes() {
    let spec = all_conv3(11, 32);
    let ratio = spec_size_of(&spec, 64).bytes as f64 / spec_size_of(&spec, 32).bytes as f64;
    assert!(ratio > 3.5 && ratio < 4.0, "{ratio}");
}

#[test]
fn bytes_are_four_per_parameter() {
    let r = spec_size_of(&all_conv3(3, 5), 5);
    assert_eq!(r.bytes, 4 * r.parameters);
}

#[test]
fn supernet_gradients_reach_alpha_and_weights() {
    let mut rng = rng_for(11, Stream::Init, 0);
    let g = Network::generator_supernet(3, 4, 3, &mut rng).unwrap();
    let mut tape = Tape::new();
    let bound = g.params().bind(&mut tape, Trainable::ALL);
    let x = tape.constant(random_image(1, 3, 16, 16, 11));
    let y = g.forward(&mut tape, &bound, x).unwrap();
    let loss = tape.mean(y).unwrap();
    let grads = tape.backward(loss).unwrap();
    for (id, p) in g.params().iter() {
        let grad = grads.get(bound.var(id)).unwrap_or_else(|| panic!("no gradient for {}", p.name));
        assert!(grad.iter().all(|v| v.is_finite()), "{}", p.name);
    }
}

#[test]
fn checkpoint_restores_network_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.ckpt");
    let mut rng = rng_for(12, Stream::Init, 0);
    let g = Network::generator_supernet(3, 4, 3, &mut rng).unwrap();
    checkpoint::save(g.params(), &path).unwrap();
    let mut other = Network::generator_supernet(3, 4, 3, &mut rng).unwrap();
    let x = random_image(1, 3, 8, 8, 12);
    assert!(g.infer(&x).unwrap().max_abs_diff(&other.infer(&x).unwrap()) > 0.0);
    checkpoint::restore_into(other.params_mut(), &checkpoint::load(&path).unwrap()).unwrap();
    assert_eq!(g.infer(&x).unwrap(), other.infer(&x).unwrap());

    let mut mismatched = Network::generator_supernet(4, 4, 3, &mut rng).unwrap();
    assert!(checkpoint::restore_into(mismatched.params_mut(), g.params()).is_err());
}
