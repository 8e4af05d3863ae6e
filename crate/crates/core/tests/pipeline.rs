use cyclesearch_core::data::{generate_synthetic, Side, SyntheticKind, SyntheticTask, UnpairedDataset};
use cyclesearch_core::evaluation::{best_of_k, evaluate, train_discrete, TrainSetup};
use cyclesearch_core::networks::{checkpoint, Model};
use cyclesearch_core::search_engine::{search, Scheme, SearchConfig};
use cyclesearch_core::search_space::{discretize, ArchitectureSpec, Role};

fn data(kind: SyntheticKind) -> UnpairedDataset {
    generate_synthetic(&SyntheticTask {
        kind,
        image_size: 16,
        n_a: 4,
        n_b: 5,
        seed: 3,
    })
    .unwrap()
}

fn config(scheme: Scheme) -> SearchConfig {
    SearchConfig {
        scheme,
        n_cells: 4,
        hidden_search: 3,
        hidden_final: Some(5),
        epochs: 2,
        seed: 8,
        ..SearchConfig::default()
    }
}

#[test]
fn every_scheme_emits_valid_specs() {
    let d = data(SyntheticKind::ColorSwap);
    for scheme in Scheme::ALL {
        let out = search(config(scheme), &d).unwrap();
        for spec in [&out.specs.ga, &out.specs.gb, &out.specs.da, &out.specs.db] {
            spec.validate().unwrap();
            assert_eq!(spec.hidden_dim, 5);
            assert_eq!(ArchitectureSpec::from_json(&spec.to_json()).unwrap(), *spec);
        }
        assert_eq!(out.specs.ga.n_cells(), 4);
        assert_eq!(out.specs.da.n_cells(), 2);
        // Specs are the argmax of the reported weights.
        assert_eq!(discretize(Role::Generator, 4, &out.alphas.ga, 5).unwrap(), out.specs.ga);
        assert_eq!(discretize(Role::Discriminator, 2, &out.alphas.db, 5).unwrap(), out.specs.db);
    }
}

#[test]
fn search_is_deterministic_and_seed_sensitive() {
    let d = data(SyntheticKind::TextureAsym);
    let a = search(config(Scheme::Ths), &d).unwrap();
    let b = search(config(Scheme::Ths), &d).unwrap();
    assert_eq!(a.records, b.records);
    assert_eq!(a.alphas, b.alphas);
    let c = search(SearchConfig { seed: 9, ..config(Scheme::Ths) }, &d).unwrap();
    assert_ne!(a.records, c.records);
}

#[test]
fn searched_specs_train_and_restore() {
    let d = data(SyntheticKind::ColorSwap);
    let out = search(config(Scheme::Of), &d).unwrap();
    let s = out.specs;
    let setup = TrainSetup::searched(s.ga, s.gb, s.da, s.db, 4, 2);
    let trained = train_discrete(&setup, &d, 1).unwrap();
    assert_eq!(trained.records.len(), 2 * d.len(Side::B));
    let report = evaluate(&trained, &setup, &d, "of").unwrap();
    assert!(report.proxy_ab.is_finite() && report.proxy_ba.is_finite());

    let bytes = checkpoint::encode(trained.nets.ga.params());
    let restored = checkpoint::decode(&bytes).unwrap();
    let mut fresh = train_discrete(&TrainSetup { epochs: 0, ..setup.clone() }, &d, 2).unwrap();
    checkpoint::restore_into(fresh.nets.ga.params_mut(), &restored).unwrap();
    let x = &d.side(Side::A)[0];
    assert_eq!(fresh.nets.ga.infer(x).unwrap(), trained.nets.ga.infer(x).unwrap());

    let best = best_of_k(&setup, &d, &d, &[1, 2], "of").unwrap();
    assert_eq!(best.reports[0], report);
    assert_eq!(best.reports.len(), 2);
}
