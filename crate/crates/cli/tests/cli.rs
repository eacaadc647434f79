use std::path::{Path, PathBuf};
use std::process::Command;

use sha2::{Digest, Sha256};
use tempfile::TempDir;
use vpr_cli::commands::{self, GtMode};
use vpr_cli::config::RunConfig;
use vpr_cli::manifest::{write_manifest, Bundle, DatasetManifest, Role};
use vpr_core::synthetic::texture;
use vpr_core::GrayImage;

const CONFIG: &str = r#"
seed = 3
[extractor]
kind = "binary"
max_features = 150
[dictionary]
k = 8
max_iters = 25
[localize]
n = 5
[synthetic]
places = 8
training_frames = 6
[[bench.families]]
label = "binary"
k = 8
extractor = { kind = "binary", max_features = 150 }
[[bench.families]]
label = "float"
k = 8
extractor = { kind = "float", max_features = 150 }
"#;

fn vpr(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_vpr")).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn sha(path: &Path) -> String {
    hex::encode(Sha256::digest(std::fs::read(path).unwrap()))
}

struct Fixture {
    dir: TempDir,
    cfg: RunConfig,
    config_path: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let config_path = dir.path().join("run.toml");
        std::fs::write(&config_path, CONFIG).unwrap();
        let cfg = RunConfig::load(&config_path).unwrap();
        Fixture { dir, cfg, config_path }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn p(&self, rel: &str) -> String {
        self.path(rel).display().to_string()
    }

    fn synthetic(&self) -> PathBuf {
        let out = self.path("data");
        if !out.join("bundle.toml").exists() {
            commands::cmd_gen_synthetic(&self.cfg, &out).unwrap();
        }
        out
    }

    /// Writes textured images and a manifest with the given role.
    fn images(&self, name: &str, role: Role, imgs: &[GrayImage]) -> DatasetManifest {
        let dir = self.path(name);
        std::fs::create_dir_all(&dir).unwrap();
        let files: Vec<String> = imgs
            .iter()
            .enumerate()
            .map(|(i, img)| {
                let f = format!("{name}_{i}.pgm");
                img.save_pgm(dir.join(&f)).unwrap();
                f
            })
            .collect();
        let manifest = self.path(&format!("{name}.toml"));
        write_manifest(&manifest, name, role, Path::new(name), &files, None).unwrap();
        DatasetManifest::load(&manifest).unwrap()
    }
}

fn textures(n: usize, seed: u64) -> Vec<GrayImage> {
    (0..n).map(|i| texture(120, 90, seed + i as u64)).collect()
}

#[test]
fn train_dict_small_set_round_trips_and_is_deterministic() {
    let fx = Fixture::new();
    let mut cfg = fx.cfg.clone();
    cfg.dictionary.k = 4;
    let m = fx.images("train", Role::Training, &textures(3, 10));
    let a = fx.path("a.vprd");
    let b = fx.path("b.vprd");
    let s = commands::cmd_train_dict(&cfg, &m, &a).unwrap();
    assert_eq!(s.words, 4);
    assert!(s.descriptors >= 4);
    commands::cmd_train_dict(&cfg, &m, &b).unwrap();
    assert_eq!(sha(&a), sha(&b));
    let dict = vpr_core::VisualDictionary::load(&a).unwrap();
    assert_eq!(dict.k(), 4);
    assert_eq!(vpr_core::VisualDictionary::from_bytes(&dict.to_bytes()).unwrap(), dict);
    let sidecar: serde_json::Value =
        serde_json::from_slice(&std::fs::read(fx.path("a.vprd.json")).unwrap()).unwrap();
    assert_eq!(sidecar["meta"]["seed"], 3);
    assert_eq!(sidecar["training"]["descriptor_count"], s.descriptors);
}

#[test]
fn train_dict_rejects_wrong_role() {
    let fx = Fixture::new();
    let m = fx.images("refs", Role::Reference, &textures(2, 1));
    let err = commands::cmd_train_dict(&fx.cfg, &m, &fx.path("d.vprd")).unwrap_err();
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn build_map_and_localize_through_the_binary() {
    let fx = Fixture::new();
    fx.images("train", Role::Training, &textures(4, 20));
    fx.images("refs", Role::Reference, &textures(5, 40));
    let cfg = fx.config_path.display().to_string();

    let (code, stdout, _) = vpr(&["train-dict", "--config", &cfg, "--manifest", &fx.p("train.toml"), "--out", &fx.p("d.vprd")]);
    assert_eq!(code, 0);
    assert!(stdout.contains("words: 8"));
    assert!(stdout.contains("final distortion"));

    let build = |out: &str| {
        vpr(&["build-map", "--config", &cfg, "--manifest", &fx.p("refs.toml"), "--dictionary", &fx.p("d.vprd"), "--out", &fx.p(out)])
    };
    assert_eq!(build("map").0, 0);
    assert_eq!(build("map2").0, 0);
    assert_eq!(sha(&fx.path("map/vlads.vprv")), sha(&fx.path("map2/vlads.vprv")));

    // query set = reference set: every query finds itself first
    let (code, _, err) = vpr(&["localize", "--config", &cfg, "--manifest", &fx.p("refs.toml"), "--map", &fx.p("map"), "--out", &fx.p("res.csv")]);
    assert_eq!(code, 0, "{err}");
    let results = vpr_core::eval::read_results_csv(std::fs::File::open(fx.path("res.csv")).unwrap()).unwrap();
    assert_eq!(results.len(), 5);
    for r in &results {
        assert_eq!(r.ranking[0].id, r.query_id);
        assert_eq!(r.ranking.len(), 5);
    }
    assert!(fx.path("res.timing.csv").exists());
    let timing: serde_json::Value =
        serde_json::from_slice(&std::fs::read(fx.path("res.timing.json")).unwrap()).unwrap();
    assert_eq!(timing["mode"], "latency");
    assert_eq!(timing["summary"]["count"], 5);
    assert!(fx.path("res.csv.meta.json").exists());
}

#[test]
fn single_image_map() {
    let fx = Fixture::new();
    let train = fx.images("train", Role::Training, &textures(3, 5));
    let refs = fx.images("one", Role::Reference, &textures(1, 77));
    commands::cmd_train_dict(&fx.cfg, &train, &fx.path("d.vprd")).unwrap();
    let s = commands::cmd_build_map(&fx.cfg, &refs, &fx.path("d.vprd"), &fx.path("map")).unwrap();
    assert_eq!((s.images, s.indexed), (1, 1));
}

#[test]
fn mismatched_dictionary_kind_names_both() {
    let fx = Fixture::new();
    let train = fx.images("train", Role::Training, &textures(3, 5));
    fx.images("refs", Role::Reference, &textures(2, 9));
    commands::cmd_train_dict(&fx.cfg, &train, &fx.path("d.vprd")).unwrap();
    let float_cfg = fx.path("float.toml");
    std::fs::write(&float_cfg, "[extractor]\nkind = \"float\"\n").unwrap();
    let (code, _, err) = vpr(&[
        "build-map",
        "--config",
        &float_cfg.display().to_string(),
        "--manifest",
        &fx.p("refs.toml"),
        "--dictionary",
        &fx.p("d.vprd"),
        "--out",
        &fx.p("map"),
    ]);
    assert_eq!(code, 1);
    assert!(err.contains("binary") && err.contains("float"), "{err}");
}

#[test]
fn localize_rejects_empty_manifest_and_foreign_config() {
    let fx = Fixture::new();
    let train = fx.images("train", Role::Training, &textures(3, 5));
    let refs = fx.images("refs", Role::Reference, &textures(2, 9));
    commands::cmd_train_dict(&fx.cfg, &train, &fx.path("d.vprd")).unwrap();
    commands::cmd_build_map(&fx.cfg, &refs, &fx.path("d.vprd"), &fx.path("map")).unwrap();

    let empty = fx.images("empty", Role::Query, &[]);
    let err = commands::cmd_localize(&fx.cfg, &empty, &fx.path("map"), &fx.path("r.csv")).unwrap_err();
    assert_eq!(err.exit_code(), 1);

    let mut other = fx.cfg.clone();
    other.extractor = vpr_core::ExtractorConfig::from_kind("binary").unwrap();
    let err = commands::cmd_localize(&other, &refs, &fx.path("map"), &fx.path("r.csv")).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    assert!(err.to_string().contains("incompatible"));
}

#[test]
fn manifest_validation() {
    let fx = Fixture::new();
    let m = fx.path("bad.toml");
    std::fs::write(&m, "name = \"x\"\nrole = \"query\"\nimages = [\"nope.pgm\"]\n").unwrap();
    let err = DatasetManifest::load(&m).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    assert!(err.to_string().contains("nope.pgm"));

    texture(32, 32, 1).save_pgm(fx.path("a.pgm")).unwrap();
    std::fs::write(&m, "name = \"x\"\nrole = \"query\"\nimages = [\"a.pgm\", \"a.pgm\"]\n").unwrap();
    assert!(DatasetManifest::load(&m).unwrap_err().to_string().contains("duplicate"));
}

fn write_results(path: &Path, rows: &[(&str, &str, f64)]) {
    let mut text = String::from("query_id,rank,reference_id,distance,similarity,t_descriptor,t_search,t_total,degenerate\n");
    for (q, r, s) in rows {
        text.push_str(&format!("{q},1,{r},{},{s},0.01,0.001,0.011,false\n", 1.0 / s - 1.0));
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn evaluate_four_query_example_through_files() {
    let fx = Fixture::new();
    std::fs::write(fx.path("gt.csv"), "query_id,reference_ids\nq0,r0\nq1,r1\nq2,r2\nq3,r3\n").unwrap();
    write_results(&fx.path("a.csv"), &[("q0", "r0", 0.9), ("q1", "r9", 0.8), ("q2", "r2", 0.7), ("q3", "r3", 0.6)]);
    write_results(&fx.path("b.csv"), &[("q0", "r0", 0.9), ("q1", "r1", 0.8), ("q2", "r2", 0.7), ("q3", "r3", 0.6)]);
    let (code, stdout, err) = vpr(&[
        "evaluate",
        "--out",
        &fx.p("eval"),
        "--ground-truth",
        &fx.p("gt.csv"),
        "--results",
        &format!("mixed={}", fx.p("a.csv")),
        "--results",
        &fx.p("b.csv"),
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("b: AUC 1.000000"));
    let pr = std::fs::read_to_string(fx.path("eval/pr_mixed.csv")).unwrap();
    let rows: Vec<&str> = pr.lines().collect();
    assert_eq!(
        rows,
        vec![
            "threshold,precision,recall",
            "0.9,1,0.25",
            "0.8,0.5,0.25",
            "0.7,0.6666666666666666,0.5",
            "0.6,0.75,0.75"
        ]
    );
    let svg = std::fs::read_to_string(fx.path("eval/pr.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);

    // every query without ground truth is named
    std::fs::write(fx.path("gt_short.csv"), "q0,r0\n").unwrap();
    let (code, _, err) = vpr(&["evaluate", "--out", &fx.p("e2"), "--ground-truth", &fx.p("gt_short.csv"), "--results", &fx.p("a.csv")]);
    assert_eq!(code, 1);
    assert!(err.contains("q1, q2, q3"), "{err}");
}

#[test]
fn correlate_self_is_low_and_reports_skips() {
    let fx = Fixture::new();
    let m = fx.images("tex", Role::Reference, &[texture(160, 120, 4)]);
    let out = fx.path("corr.json");
    let r = commands::cmd_correlate(&fx.cfg, &m, &m, &out).unwrap();
    assert!(r.value > -1.0 && r.value < 0.5, "{}", r.value);
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(json["pairs_used"].as_u64().unwrap() as usize, r.pairs_used);
    assert!(json.get("pairs_skipped").is_some());
    assert_eq!(json["seed"], 3);
}

#[test]
fn correlate_kind_mismatch() {
    use vpr_core::features::write_feature_file;
    use vpr_core::{DescriptorSet, FeatureSet, Keypoint};
    let fx = Fixture::new();
    let a = fx.images("a", Role::Reference, &[texture(40, 40, 1)]);
    let b = fx.images("b", Role::Reference, &[texture(40, 40, 2)]);
    let feats = fx.path("feats");
    std::fs::create_dir_all(&feats).unwrap();
    let float = FeatureSet::new(
        "a_0",
        vec![Keypoint::new(1.0, 1.0, 0)],
        DescriptorSet::from_float_rows(4, vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
    )
    .unwrap();
    write_feature_file(feats.join("a_0.vprf"), &float).unwrap();
    let binary = FeatureSet::new(
        "b_0",
        vec![Keypoint::new(1.0, 1.0, 0)],
        DescriptorSet::Binary { bits: 256, data: vec![0x5a; 32] },
    )
    .unwrap();
    write_feature_file(feats.join("b_0.vprf"), &binary).unwrap();
    let mut cfg = fx.cfg.clone();
    cfg.extractor = vpr_core::ExtractorConfig::External(vpr_core::features::ExternalParams {
        dir: feats,
        descriptor_kind: vpr_core::DescriptorKind::Float,
    });
    let err = commands::cmd_correlate(&cfg, &a, &b, &fx.path("c.json")).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    assert!(err.to_string().contains("mismatch"), "{err}");
}

#[test]
fn bench_two_families_and_reproducible_accuracy() {
    let fx = Fixture::new();
    let data = fx.synthetic();
    let bundle_path = data.join("bundle.toml");
    let bundle = Bundle::load(&bundle_path).unwrap();
    assert_eq!(bundle.queries.len(), 4);
    let a = commands::cmd_bench(&fx.cfg, &bundle, &bundle_path, &fx.path("bench_a")).unwrap();
    assert_eq!(a.families.len(), 2);
    let svg = std::fs::read_to_string(fx.path("bench_a/pr_tilt15.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);
    let timing = std::fs::read_to_string(fx.path("bench_a/timing.csv")).unwrap();
    assert_eq!(timing.lines().filter(|l| l.contains(",tilt15,")).count(), 2);
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(fx.path("bench_a/report.json")).unwrap()).unwrap();
    assert_eq!(report["meta"]["config"]["seed"], 3);
    assert_eq!(report["meta"]["seed"], 3);
    for f in &a.families {
        let acc = f.split_accuracy("tilt00").unwrap();
        assert_eq!(acc.queries, 8);
    }

    commands::cmd_bench(&fx.cfg, &bundle, &bundle_path, &fx.path("bench_b")).unwrap();
    assert_eq!(sha(&fx.path("bench_a/accuracy.json")), sha(&fx.path("bench_b/accuracy.json")));
    for fam in ["binary", "float"] {
        assert_eq!(
            sha(&fx.path(&format!("bench_a/{fam}/pr_tilt30.csv"))),
            sha(&fx.path(&format!("bench_b/{fam}/pr_tilt30.csv")))
        );
    }
}

#[test]
fn bench_stage_failure_names_the_stage() {
    let fx = Fixture::new();
    let data = fx.synthetic();
    let bundle_path = data.join("bundle.toml");
    let bundle = Bundle::load(&bundle_path).unwrap();
    let mut cfg = fx.cfg.clone();
    // more words than training descriptors
    cfg.bench.families.truncate(1);
    cfg.bench.families[0].k = Some(1_000_000);
    let err = commands::cmd_bench(&cfg, &bundle, &bundle_path, &fx.path("bench")).unwrap_err();
    assert!(err.to_string().contains("stage `train:binary`"), "{err}");
}

#[test]
fn gen_gt_modes() {
    let fx = Fixture::new();
    let refs = fx.images("refs", Role::Reference, &textures(4, 1));
    let q = fx.images("q", Role::Query, &textures(3, 9));
    let n = commands::cmd_gen_gt(&refs, &refs, GtMode::SameId, &fx.path("same.csv")).unwrap();
    assert_eq!(n, 4);
    let gt = vpr_core::GroundTruth::load(fx.path("same.csv")).unwrap();
    assert!(gt.get("refs_2").unwrap().contains("refs_2"));

    assert!(commands::cmd_gen_gt(&q, &refs, GtMode::SameId, &fx.path("x.csv")).is_err());
    commands::cmd_gen_gt(&q, &refs, GtMode::Position { tolerance: 1 }, &fx.path("pos.csv")).unwrap();
    let gt = vpr_core::GroundTruth::load(fx.path("pos.csv")).unwrap();
    assert_eq!(gt.get("q_0").unwrap().len(), 2);
    assert_eq!(gt.get("q_1").unwrap().len(), 3);
}

#[test]
fn exit_codes() {
    assert_eq!(vpr(&["--help"]).0, 0);
    assert_eq!(vpr(&["no-such-command"]).0, 1);
    assert_eq!(vpr(&["train-dict", "--out", "x"]).0, 1);
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[dictionary]\nk = 1\n").unwrap();
    let (code, _, err) = vpr(&["gen-synthetic", "--config", &bad.display().to_string(), "--out", "unused"]);
    assert_eq!(code, 1);
    assert!(err.contains("dictionary.k"));
    // unreadable image data is a validation error, an unwritable output a runtime one
    let m = dir.path().join("m.toml");
    std::fs::write(dir.path().join("junk.pgm"), b"not an image").unwrap();
    std::fs::write(&m, "name = \"j\"\nrole = \"training\"\nimages = [\"junk.pgm\"]\n").unwrap();
    let (code, _, _) = vpr(&["train-dict", "--manifest", &m.display().to_string(), "--out", &dir.path().join("d").display().to_string()]);
    assert_eq!(code, 1);
    texture(64, 64, 1).save_pgm(dir.path().join("ok.pgm")).unwrap();
    std::fs::write(&m, "name = \"j\"\nrole = \"reference\"\nimages = [\"ok.pgm\"]\n").unwrap();
    let (code, _, _) = vpr(&["gen-gt", "--manifest", &m.display().to_string(), "--reference", &m.display().to_string(), "--out", "/proc/forbidden/gt.csv"]);
    assert_eq!(code, 2);
}
