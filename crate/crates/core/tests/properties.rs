use proptest::prelude::*;
use refinery_core::checkpoint::{decode_grids, encode_grid};
use refinery_core::data::{batch_indices, encode_idx_images, parse_idx_images};
use refinery_core::harness::{
    epochs_to_target, mean_std, parse_csv, psnr, ExperimentConfig, RunReport, SetupId,
};
use refinery_core::pyramid::{down, max_levels, up, Pyramid};
use refinery_core::quantize::{assign, Codebook};
use refinery_core::refinery::{patch_embed, patch_unembed};
use refinery_core::{Grid, RngStream};

fn grid_strategy(max_side: usize) -> impl Strategy<Value = Grid> {
    (2..=max_side, 2..=max_side, 1..=3usize, any::<u64>()).prop_map(|(h, w, c, seed)| {
        let shape = if c == 1 { vec![h, w] } else { vec![h, w, c] };
        RngStream::new(seed, 0).randn(&shape)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pyramids_reconstruct_any_shape(img in grid_strategy(20), depth in 1usize..4) {
        let (h, w) = (img.shape()[0], img.shape()[1]);
        let levels = depth.min(max_levels(h, w));
        let p = Pyramid::build(&img, levels).unwrap();
        prop_assert_eq!(p.laplacians.len(), levels);
        prop_assert!(p.reconstruct().unwrap().sub(&img).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn resampling_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut rng = RngStream::new(seed, 0);
        let (x, y) = (rng.randn(&[9, 7]), rng.randn(&[9, 7]));
        let combo = x.mul_scalar(a).add(&y.mul_scalar(b)).unwrap();
        let lhs = down(&combo).unwrap();
        let rhs = down(&x).unwrap().mul_scalar(a).add(&down(&y).unwrap().mul_scalar(b)).unwrap();
        prop_assert!(lhs.sub(&rhs).unwrap().max_abs() < 1e-12);
        let lhs = up(&lhs, (9, 7)).unwrap();
        let rhs = up(&rhs, (9, 7)).unwrap();
        prop_assert!(lhs.sub(&rhs).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn constants_survive_resampling(h in 2usize..16, w in 2usize..16, v in -5.0f64..5.0) {
        let g = Grid::full(&[h, w], v);
        let d = down(&g).unwrap();
        prop_assert!(d.data().iter().all(|x| (x - v).abs() < 1e-12));
        let u = up(&d, (h, w)).unwrap();
        prop_assert!(u.data().iter().all(|x| (x - v).abs() < 1e-12));
    }

    #[test]
    fn assignment_is_the_nearest_entry(seed in any::<u64>(), k in 1usize..10, d in 1usize..5) {
        let mut rng = RngStream::new(seed, 0);
        let cb = Codebook::new(rng.randn(&[k, d])).unwrap();
        let x = rng.randn(&[20, d]);
        for (i, &a) in assign(&cb, &x).unwrap().iter().enumerate() {
            let dist = |j: usize| cb.entry(j).iter().zip(x.row(i)).map(|(p, q)| (p - q).powi(2)).sum::<f64>();
            for j in 0..k {
                prop_assert!(dist(a) <= dist(j));
            }
        }
    }

    #[test]
    fn batches_partition_the_dataset(n in 1usize..300, b in 1usize..64, seed in any::<u64>()) {
        let batches = batch_indices(n, b, &mut RngStream::new(seed, 0)).unwrap();
        prop_assert!(batches.iter().all(|x| x.len() <= b && !x.is_empty()));
        let mut all: Vec<usize> = batches.concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn grids_survive_checkpoint_encoding(g in grid_strategy(12)) {
        let mut bytes = Vec::new();
        encode_grid(&g, &mut bytes);
        encode_grid(&g.mul_scalar(-1.0), &mut bytes);
        let back = decode_grids(&bytes, 2).unwrap();
        prop_assert_eq!(&back[0], &g);
        prop_assert_eq!(&back[1], &g.mul_scalar(-1.0));
        prop_assert!(decode_grids(&bytes[..bytes.len() - 1], 2).is_err());
    }

    #[test]
    fn idx_bytes_round_trip(n in 1usize..5, h in 1usize..9, w in 1usize..9, seed in any::<u64>()) {
        let mut rng = RngStream::new(seed, 0);
        let img = Grid::from_fn(&[n, h, w], |_| rng.below(256) as f64 / 255.0);
        let bytes = encode_idx_images(&img).unwrap();
        prop_assert_eq!(parse_idx_images(&bytes).unwrap(), img);
    }

    #[test]
    fn patch_embedding_is_a_bijection(seed in any::<u64>()) {
        let img = RngStream::new(seed, 0).randn(&[28, 28]);
        let lat = patch_embed(&img).unwrap();
        prop_assert_eq!(lat.values.shape(), &[14, 14, 4]);
        prop_assert_eq!(patch_unembed(&lat).unwrap(), img);
    }

    #[test]
    fn csv_reload_reproduces_summaries(values in prop::collection::vec(-1e3f64..1e3, 1..6)) {
        let mut rep = RunReport::new(&ExperimentConfig::new(SetupId::A));
        for (seed, v) in values.iter().enumerate() {
            rep.push("M (x)", "mse", seed as u64, *v);
        }
        let rows = parse_csv(&rep.to_csv()).unwrap();
        let reloaded: Vec<f64> = rows.iter().map(|r| r.value).collect();
        prop_assert_eq!(&reloaded, &values);
        let (m, s) = mean_std(&reloaded);
        let (m0, s0) = rep.summary("M (x)", "mse");
        prop_assert!((m - m0).abs() <= 1e-12 && (s - s0).abs() <= 1e-12);
    }

    #[test]
    fn sample_std_matches_two_pass_formula(values in prop::collection::vec(-10.0f64..10.0, 2..10)) {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let (m, s) = mean_std(&values);
        prop_assert!((m - mean).abs() < 1e-12);
        prop_assert!((s - var.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn epochs_to_target_is_first_crossing(trace in prop::collection::vec(0.0f64..0.05, 0..20), target in 0.0f64..0.05) {
        let e = epochs_to_target(&trace, target);
        match trace.iter().position(|&v| v <= target) {
            Some(i) => prop_assert_eq!(e, (i + 1) as f64),
            None => prop_assert!(e.is_infinite()),
        }
    }

    #[test]
    fn psnr_is_monotone(a in 1e-6f64..1.0, b in 1e-6f64..1.0) {
        prop_assume!(a < b);
        prop_assert!(psnr(a) > psnr(b));
    }

    #[test]
    fn config_text_round_trips(seeds in prop::collection::vec(0u64..100, 1..4), epochs in 1usize..50, sigma in 0.01f64..1.0) {
        let mut cfg = ExperimentConfig::new(SetupId::C);
        cfg.seeds = seeds;
        cfg.epochs = epochs;
        cfg.sigma_train = sigma;
        let mut back = ExperimentConfig::new(SetupId::A);
        back.apply_text(&cfg.canonical_text()).unwrap();
        prop_assert_eq!(back.hash(), cfg.hash());
        prop_assert_eq!(back, cfg);
    }
}
