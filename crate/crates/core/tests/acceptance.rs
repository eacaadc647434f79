//! Acceptance criteria, run in sequence so timing measurements do not
//! compete with other work. Each criterion prints one PASS/FAIL line.

use std::f64::consts::FRAC_1_SQRT_2;
use std::io::Write as _;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use vpr_core::features::{BinaryParams, FloatParams};
use vpr_core::pipeline::MapOptions;
use vpr_core::synthetic::{generate, SyntheticBundle, SyntheticConfig};
use vpr_core::vlad::compute_vlad_stages;
use vpr_core::vocab::train_dictionary_with_report;
use vpr_core::*;

type Outcome = Result<String, String>;

fn report(name: &str, started: Instant, outcome: &Outcome) {
    let secs = started.elapsed().as_secs_f64();
    let line = match outcome {
        Ok(detail) => format!("[acceptance] PASS {name} ({secs:.1}s): {detail}"),
        Err(detail) => format!("[acceptance] FAIL {name} ({secs:.1}s): {detail}"),
    };
    // Written to the raw stderr handle so the line survives output capture.
    let _ = writeln!(std::io::stderr(), "{line}");
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let dims = [8usize, 64, 512];
    let instances = 210;
    let mut queries = 0;
    for inst in 0..instances {
        let n = match inst % 5 {
            0 => 1 + inst % 7,
            1 => 2000,
            _ => rng.gen_range(1..=2000),
        };
        let dim = dims[inst % 3];
        let leaf = rng.gen_range(1..=32);
        // every fourth instance sits on a coarse grid to force distance ties
        let grid = inst % 4 == 0;
        let coord = |rng: &mut ChaCha8Rng| if grid { rng.gen_range(0..3) as f32 } else { rng.gen::<f32>() };
        let points: Vec<(usize, Arc<[f32]>)> = (0..n)
            .map(|i| {
                let v: Vec<f32> = (0..dim).map(|_| coord(&mut rng)).collect();
                (i * 3 + inst, v.into())
            })
            .collect();
        let tree = BallTree::build(points.clone(), leaf).map_err(|e| e.to_string())?;
        tree.validate().map_err(|e| format!("instance {inst}: {e}"))?;
        for qi in 0..3 {
            let q: Vec<f32> = if qi == 0 {
                points[rng.gen_range(0..n)].1.to_vec()
            } else {
                (0..dim).map(|_| coord(&mut rng)).collect()
            };
            let k = rng.gen_range(1..=40);
            let got = tree.query_knn(&q, k).map_err(|e| e.to_string())?;
            let want = brute_force_knn(&points, &q, k).map_err(|e| e.to_string())?;
            check(got == want, || format!("instance {inst} (n={n}, dim={dim}) differs from brute force"))?;
            queries += 1;
        }
    }
    Ok(format!("{instances} instances, {queries} queries identical to brute force"))
}

struct Family {
    label: &'static str,
    extractor: ExtractorConfig,
    map: EnvironmentMap,
}

fn trained_family(
    label: &'static str,
    extractor: ExtractorConfig,
    k: usize,
    bundle: &SyntheticBundle,
    refs: &[(String, GrayImage)],
) -> Result<Family, String> {
    let feats: Vec<FeatureSet> = bundle
        .training
        .iter()
        .map(|(id, img)| extract(id, img, &extractor))
        .collect::<Result<_>>()
        .map_err(|e| e.to_string())?;
    let params = KMeansParams {
        k,
        seed: 11,
        max_iters: 10,
        tol: 1e-4,
    };
    let dict = train_dictionary(&feats, &params).map_err(|e| format!("{label}: {e}"))?;
    let map = build_map(refs, &dict, &extractor, &MapOptions::default()).map_err(|e| e.to_string())?;
    Ok(Family { label, extractor, map })
}

fn self_retrieval(fam: &Family, refs: &[(String, GrayImage)]) -> Outcome {
    check(refs.len() >= 200, || "fewer than 200 references".into())?;
    check(fam.map.indexed_len() == refs.len(), || {
        format!("{} degenerate references", refs.len() - fam.map.indexed_len())
    })?;
    let mut hits = 0;
    let mut worst = 0f64;
    for (id, img) in refs {
        let r = localize(id, img, &fam.map, 1).map_err(|e| e.to_string())?;
        let best = r.ranking.first().ok_or_else(|| format!("{id}: empty ranking"))?;
        if &best.id == id && best.distance <= 1e-9 {
            hits += 1;
        }
        worst = worst.max(best.distance);
    }
    let recall = hits as f64 / refs.len() as f64;
    check(recall == 1.0, || format!("recall@1 = {recall}, worst rank-1 distance {worst:e}"))?;
    Ok(format!(
        "{} refs ({} map), recall@1 = 1.0, max self distance {worst:e}",
        refs.len(),
        fam.label
    ))
}

fn vlad_invariants(families: &[&Family]) -> Outcome {
    let mut checked = 0;
    for fam in families {
        for (id, v) in &fam.map.vlads().entries {
            if v.degenerate {
                continue;
            }
            let n = v.norm();
            check((n - 1.0).abs() <= 1e-6, || format!("{} {id}: norm {n}", fam.label))?;
            checked += 1;
        }
    }
    // random feature sets against a random dictionary
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let (k, dim) = (rng.gen_range(2..10), rng.gen_range(1..16));
        let centroids: Vec<f32> = (0..k * dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let dict = VisualDictionary::from_centroids(DescriptorKind::Float, dim, centroids, [0; 32])
            .map_err(|e| e.to_string())?;
        let n = rng.gen_range(1..40);
        let data: Vec<f32> = (0..n * dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let fs = FeatureSet::new(
            "f",
            vec![Keypoint::new(0.0, 0.0, 0); n],
            DescriptorSet::from_float_rows(dim, data).map_err(|e| e.to_string())?,
        )
        .map_err(|e| e.to_string())?;
        let v = compute_vlad(&fs, &dict, VladNormalization::default()).map_err(|e| e.to_string())?;
        if !v.degenerate {
            check((v.norm() - 1.0).abs() <= 1e-6, || format!("fuzzed VLAD norm {}", v.norm()))?;
            checked += 1;
        }
    }

    // k=2, dim=2 worked example
    let dict = VisualDictionary::from_centroids(DescriptorKind::Float, 2, vec![0.0, 0.0, 10.0, 10.0], [0; 32])
        .map_err(|e| e.to_string())?;
    let fs = FeatureSet::new(
        "w",
        vec![Keypoint::new(0.0, 0.0, 0); 3],
        DescriptorSet::from_float_rows(2, vec![1.0, 0.0, 0.0, 1.0, 11.0, 10.0]).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let s = compute_vlad_stages(&fs, &dict, VladNormalization::default()).map_err(|e| e.to_string())?;
    check(s.raw == vec![1.0, 1.0, 1.0, 0.0], || format!("raw {:?}", s.raw))?;
    let close = |got: &[f64], want: [f64; 4]| got.iter().zip(want).all(|(g, w)| (g - w).abs() <= 1e-3);
    check(close(&s.intra, [FRAC_1_SQRT_2, FRAC_1_SQRT_2, 1.0, 0.0]), || format!("intra {:?}", s.intra))?;
    check(close(&s.signed_sqrt, [0.8409, 0.8409, 1.0, 0.0]), || format!("sqrt {:?}", s.signed_sqrt))?;
    // 0.8409 / sqrt(2 * 0.8409^2 + 1) = 0.5412 and 1 / sqrt(...) = 0.6436
    let out: Vec<f64> = s.output.values.iter().map(|&v| v as f64).collect();
    check(close(&out, [0.5412, 0.5412, 0.6436, 0.0]), || format!("output {out:?}"))?;
    Ok(format!("{checked} VLADs at unit norm; worked example {out:.4?}"))
}

fn distortion_non_increasing(history: &[f64]) -> bool {
    history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-12)
}

fn kmeans_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for run in 0..50 {
        let dim = rng.gen_range(1..12);
        let n = rng.gen_range(20..400);
        let k = rng.gen_range(2..12);
        let data: Vec<f32> = (0..n * dim).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let fs = FeatureSet::new(
            "k",
            vec![Keypoint::new(0.0, 0.0, 0); n],
            DescriptorSet::from_float_rows(dim, data).map_err(|e| e.to_string())?,
        )
        .map_err(|e| e.to_string())?;
        let params = KMeansParams {
            k,
            seed: run,
            max_iters: 50,
            tol: 0.0,
        };
        let (_, rep) = train_dictionary_with_report(&[fs], &params).map_err(|e| e.to_string())?;
        check(distortion_non_increasing(&rep.distortion_history), || {
            format!("run {run}: distortion rose: {:?}", rep.distortion_history)
        })?;
    }

    // two well separated blobs
    let mut data = Vec::new();
    for i in 0..400 {
        let c = if i % 2 == 0 { [-5.0f32, 2.0] } else { [5.0, -2.0] };
        data.push(c[0] + rng.gen_range(-1.0..1.0));
        data.push(c[1] + rng.gen_range(-1.0..1.0));
    }
    let fs = FeatureSet::new(
        "b",
        vec![Keypoint::new(0.0, 0.0, 0); 400],
        DescriptorSet::from_float_rows(2, data).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let params = KMeansParams {
        k: 2,
        seed: 1,
        ..KMeansParams::default()
    };
    let dict = train_dictionary(std::slice::from_ref(&fs), &params).map_err(|e| e.to_string())?;
    let mut cs: Vec<[f32; 2]> = (0..2).map(|j| [dict.centroid(j)[0], dict.centroid(j)[1]]).collect();
    cs.sort_by(|a, b| a[0].total_cmp(&b[0]));
    let err = ((cs[0][0] + 5.0).abs()).max((cs[0][1] - 2.0).abs()).max((cs[1][0] - 5.0).abs()).max((cs[1][1] + 2.0).abs());
    check(err < 0.5, || format!("blob centroids {cs:?}"))?;

    // seeded determinism, compared by file hash
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut hashes = Vec::new();
    for i in 0..2 {
        let d = train_dictionary(std::slice::from_ref(&fs), &KMeansParams { k: 5, seed: 42, ..KMeansParams::default() })
            .map_err(|e| e.to_string())?;
        let path = dir.path().join(format!("d{i}.vprd"));
        d.save(&path).map_err(|e| e.to_string())?;
        hashes.push(hex::encode(Sha256::digest(std::fs::read(&path).map_err(|e| e.to_string())?)));
    }
    check(hashes[0] == hashes[1], || "dictionary files differ".into())?;
    Ok(format!("50 fuzzed runs monotone; blob error {err:.3}; file hash {}", &hashes[0][..12]))
}

fn pr_result(q: usize, correct: bool, sim: f64) -> LocalizationResult {
    LocalizationResult {
        query_id: format!("q{q}"),
        ranking: vec![vpr_core::pipeline::RankedReference {
            id: if correct { format!("r{q}") } else { "other".into() },
            distance: 1.0 / sim - 1.0,
            similarity: sim,
        }],
        timing: TimingRecord::default(),
        degenerate: false,
    }
}

fn identity_gt(n: usize) -> GroundTruth {
    let mut gt = GroundTruth::new();
    for i in 0..n {
        gt.insert(format!("q{i}"), [format!("r{i}")]).unwrap();
    }
    gt
}

fn pr_correctness() -> Outcome {
    let cases = [(true, 0.9), (false, 0.8), (true, 0.7), (true, 0.6)];
    let results: Vec<_> = cases.iter().enumerate().map(|(i, &(c, s))| pr_result(i, c, s)).collect();
    let curve = compute_pr(&results, &identity_gt(4)).map_err(|e| e.to_string())?;
    let got: Vec<(f64, f64, f64)> = curve.points.iter().map(|p| (p.threshold, p.precision, p.recall)).collect();
    let want = vec![(0.9, 1.0, 0.25), (0.8, 0.5, 0.25), (0.7, 2.0 / 3.0, 0.5), (0.6, 0.75, 0.75)];
    check(got == want, || format!("4-query curve {got:?}"))?;

    let perfect: Vec<_> = (0..30).map(|i| pr_result(i, true, 1.0 / (1.0 + i as f64))).collect();
    let auc = compute_pr(&perfect, &identity_gt(30)).map_err(|e| e.to_string())?.auc;
    check((auc - 1.0).abs() <= 1e-9, || format!("perfect AUC {auc}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for set in 0..20 {
        let n = rng.gen_range(1..80);
        let base: Vec<(bool, f64)> = (0..n).map(|_| (rng.gen_bool(0.6), rng.gen_range(0..40) as f64 / 40.0)).collect();
        let (a, b) = (rng.gen_range(0.1..5.0), rng.gen_range(-3.0..3.0));
        let transforms: [Box<dyn Fn(f64) -> f64>; 3] = [
            Box::new(move |s| a * s + b),
            Box::new(|s: f64| (3.0 * s).exp()),
            Box::new(|s: f64| 1.0 / (2.0 - s)),
        ];
        let gt = identity_gt(n);
        let r0: Vec<_> = base.iter().enumerate().map(|(i, &(c, s))| pr_result(i, c, s)).collect();
        let c0 = compute_pr(&r0, &gt).map_err(|e| e.to_string())?;
        for f in &transforms {
            let r1: Vec<_> = base.iter().enumerate().map(|(i, &(c, s))| pr_result(i, c, f(s))).collect();
            let c1 = compute_pr(&r1, &gt).map_err(|e| e.to_string())?;
            let same = c0.points.len() == c1.points.len()
                && c0.points.iter().zip(&c1.points).all(|(p, q)| (p.precision, p.recall) == (q.precision, q.recall))
                && c0.auc == c1.auc;
            check(same, || format!("set {set}: curve changed under a monotone transform"))?;
        }
    }
    Ok("4-query curve exact; perfect AUC 1.0; 20 fuzzed sets invariant".into())
}

fn auc_on(fam: &Family, split: &vpr_core::synthetic::QuerySplit) -> Result<(f64, Vec<LocalizationResult>), String> {
    let results: Vec<_> = split
        .images
        .iter()
        .map(|(id, img)| localize(id, img, &fam.map, 5))
        .collect::<Result<_>>()
        .map_err(|e| e.to_string())?;
    let mut gt = GroundTruth::new();
    for (q, refs) in &split.ground_truth {
        gt.insert(q.clone(), refs.clone()).map_err(|e| e.to_string())?;
    }
    Ok((compute_pr(&results, &gt).map_err(|e| e.to_string())?.auc, results))
}

fn trade_off(binary: &Family, float: &Family, bundle: &SyntheticBundle) -> Outcome {
    let split = bundle.split(15.0).ok_or("no 15 degree split")?;
    let mut lines = Vec::new();
    let mut aucs = None;
    for run in 1..=3 {
        let (ab, rb) = auc_on(binary, split)?;
        let (af, rf) = auc_on(float, split)?;
        let tb = aggregate_timing(&rb).map_err(|e| e.to_string())?.t_total.mean;
        let tf = aggregate_timing(&rf).map_err(|e| e.to_string())?.t_total.mean;
        check(tb < tf, || format!("run {run}: binary t_total {tb:.5}s >= float {tf:.5}s"))?;
        check(af >= ab - 0.05, || format!("run {run}: float AUC {af:.4} < binary AUC {ab:.4} - 0.05"))?;
        lines.push(format!("run {run}: t_total {tb:.4}s vs {tf:.4}s ({:.1}x)", tf / tb));
        aucs = Some((ab, af));
    }
    let (ab, af) = aucs.expect("three runs");
    Ok(format!(
        "{} words binary / {} words float; AUC(15deg) {ab:.4} / {af:.4}; {}",
        binary.map.dictionary().k(),
        float.map.dictionary().k(),
        lines.join("; ")
    ))
}

fn map_size_scaling() -> Outcome {
    let cfg = SyntheticConfig {
        places: 2000,
        tilts: vec![15.0],
        training_frames: 40,
        seed: 31,
        ..SyntheticConfig::default()
    };
    let bundle = generate(&cfg).map_err(|e| e.to_string())?;
    let extractor = ExtractorConfig::Binary(BinaryParams {
        max_features: 300,
        ..BinaryParams::default()
    });
    let feats: Vec<FeatureSet> = bundle
        .training
        .iter()
        .map(|(id, img)| extract(id, img, &extractor))
        .collect::<Result<_>>()
        .map_err(|e| e.to_string())?;
    let dict = train_dictionary(&feats, &KMeansParams { k: 16, seed: 3, max_iters: 20, tol: 1e-4 })
        .map_err(|e| e.to_string())?;
    let large = build_map(&bundle.reference, &dict, &extractor, &MapOptions::default()).map_err(|e| e.to_string())?;
    let small = build_map(&bundle.reference[..200], &dict, &extractor, &MapOptions::default()).map_err(|e| e.to_string())?;
    let queries = &bundle.split(15.0).ok_or("no split")?.images[..100];
    let mean_search = |map: &EnvironmentMap| -> Result<f64, String> {
        let mut total = 0.0;
        for _ in 0..3 {
            for (id, img) in queries {
                total += localize(id, img, map, 20).map_err(|e| e.to_string())?.timing.t_search;
            }
        }
        Ok(total / (3 * queries.len()) as f64)
    };
    let s_small = mean_search(&small)?;
    let s_large = mean_search(&large)?;
    check(s_large > s_small, || format!("2000-image t_search {s_large:e}s <= 200-image {s_small:e}s"))?;
    Ok(format!(
        "mean t_search {:.1}us (200 refs) < {:.1}us (2000 refs), {} queries x3",
        s_small * 1e6,
        s_large * 1e6,
        queries.len()
    ))
}

fn correlation_sanity(families: &[&Family], bundle: &SyntheticBundle) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(123);
    for _ in 0..100 {
        let dim = rng.gen_range(2..20);
        let side = |rng: &mut ChaCha8Rng| -> Result<Vec<FeatureSet>, String> {
            let n = rng.gen_range(1..10);
            let data: Vec<f32> = (0..n * dim)
                .map(|_| if rng.gen_bool(0.2) { 1.0 } else { rng.gen_range(-5.0..5.0) })
                .collect();
            Ok(vec![FeatureSet::new(
                "c",
                vec![Keypoint::new(0.0, 0.0, 0); n],
                DescriptorSet::from_float_rows(dim, data).map_err(|e| e.to_string())?,
            )
            .map_err(|e| e.to_string())?])
        };
        let (a, b) = (side(&mut rng)?, side(&mut rng)?);
        let v = correlation_coefficient(&a, &b, 200, rng.gen()).map_err(|e| e.to_string())?.value;
        check((-1.0..=1.0).contains(&v), || format!("fuzzed correlation {v}"))?;
    }
    let single = vec![FeatureSet::new(
        "s",
        vec![Keypoint::new(0.0, 0.0, 0)],
        DescriptorSet::from_float_rows(4, vec![1.0, 2.0, 3.0, 4.0]).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?];
    let one = correlation_coefficient(&single, &single, 1000, 0).map_err(|e| e.to_string())?.value;
    check(one == 1.0, || format!("self-correlation {one}"))?;

    let mut band = Vec::new();
    for fam in families {
        let feats: Vec<FeatureSet> = bundle.reference[..60]
            .iter()
            .map(|(id, img)| extract(id, img, &fam.extractor))
            .collect::<Result<_>>()
            .map_err(|e| e.to_string())?;
        let r = correlation_coefficient(&feats, &feats, 10_000, 1).map_err(|e| e.to_string())?;
        check(r.value < 0.5, || format!("{} dataset vs itself: {}", fam.label, r.value))?;
        band.push(format!("{} {:.3} ({} skipped)", fam.label, r.value, r.pairs_skipped));
    }
    Ok(format!("100 fuzzed in [-1,1]; single descriptor 1.0; self-pairs {}", band.join(", ")))
}

#[test]
fn acceptance() {
    let mut failures = Vec::new();
    let mut run = |name: &str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let outcome = f();
        report(name, t, &outcome);
        if outcome.is_err() {
            failures.push(name.to_string());
        }
    };

    run("oracle-equivalence", &mut oracle_equivalence);
    run("pr-correctness", &mut pr_correctness);
    run("kmeans", &mut kmeans_properties);

    let t = Instant::now();
    let cfg = SyntheticConfig {
        places: 200,
        tilts: vec![15.0],
        training_frames: 200,
        ..SyntheticConfig::default()
    };
    let setup = generate(&cfg).map_err(|e| e.to_string()).and_then(|bundle| {
        let binary = trained_family(
            "binary",
            ExtractorConfig::Binary(BinaryParams { max_features: 300, ..BinaryParams::default() }),
            vpr_core::vocab::PRESET_BINARY_LOW,
            &bundle,
            &bundle.reference,
        )?;
        let float = trained_family(
            "float",
            ExtractorConfig::Float(FloatParams { max_features: 300, ..FloatParams::default() }),
            vpr_core::vocab::PRESET_FLOAT_HIGH,
            &bundle,
            &bundle.reference,
        )?;
        Ok((bundle, binary, float))
    });
    let _ = writeln!(
        std::io::stderr(),
        "[acceptance] synthetic bundle and maps ready ({:.1}s)",
        t.elapsed().as_secs_f64()
    );
    match setup {
        Ok((bundle, binary, float)) => {
            run("self-retrieval", &mut || self_retrieval(&binary, &bundle.reference));
            run("vlad-invariants", &mut || vlad_invariants(&[&binary, &float]));
            run("trade-off", &mut || trade_off(&binary, &float, &bundle));
            run("map-size-scaling", &mut map_size_scaling);
            run("correlation-sanity", &mut || correlation_sanity(&[&binary, &float], &bundle));
        }
        Err(e) => {
            for name in ["self-retrieval", "vlad-invariants", "trade-off", "map-size-scaling", "correlation-sanity"] {
                report(name, t, &Err(format!("setup failed: {e}")));
                failures.push(name.into());
            }
        }
    }
    assert!(failures.is_empty(), "failed criteria: {failures:?}");
}
