use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

fn depthflow(args: &[&str], data: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_depthflow"));
    cmd.args(args).env_remove("DEPTHFLOW_DATA");
    if let Some(d) = data {
        cmd.env("DEPTHFLOW_DATA", d);
    }
    cmd.output().expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn read_all(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

fn last_stderr_line(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).lines().last().unwrap_or_default().to_string()
}

const SMALL: &[(&str, &str)] = &[
    ("sanity-check", "[model]\ndepth = 8\nwidth = 6\n[draws]\nn_draws = 60\n"),
    (
        "function-space",
        "[model]\ndepth = 6\nwidth = 5\n[inputs]\nkind = \"grid1d\"\nlo = -2.0\nhi = 2.0\nn = 9\n[draws]\nn_draws = 30\nn_funcs = 3\n",
    ),
    ("corr-heatmap", "[model]\nkind = \"eoc\"\nphi = \"relu\"\ndepth = 6\nwidth = 7\n[draws]\nn_draws = 40\n"),
    (
        "sgd",
        "[model]\nphi = \"tanh\"\n[sgd]\ndepths = [2]\nwidths = [4, 6]\nlearning_rate = 0.1\nbatch_size = 20\ntrain_subset = 100\ntest_subset = 40\nsynthetic_fallback = true\n",
    ),
    (
        "abc",
        "[model]\ndepth = 5\nwidth = 4\ninput_layer = \"random\"\n[model.law]\nkind = \"iid\"\nsigma_w2 = 10.0\nsigma_b2 = 10.0\n[inputs]\nkind = \"grid1d\"\nlo = -2.0\nhi = 2.0\nn = 11\n[draws]\nn_funcs = 2\n[abc]\nobservations = [[-1.0, 0.5], [1.0, -0.5]]\nprior_draws = 50\nkeep = 3\n",
    ),
];

#[test]
fn every_subcommand_is_byte_identical_across_reruns_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    for (sub, body) in SMALL {
        let cfg = write(dir.path(), &format!("{sub}.toml"), body);
        let mut outs = Vec::new();
        for (run, threads) in [("a", "1"), ("b", "1"), ("c", "3")] {
            let out = dir.path().join(format!("{sub}-{run}"));
            let o = depthflow(&[sub, "--config", &cfg, "--seed", "5", "--out", out.to_str().unwrap(), "--threads", threads], None);
            assert!(o.status.success(), "{sub}: {}", String::from_utf8_lossy(&o.stderr));
            outs.push(read_all(&out));
        }
        assert!(outs[0].contains_key("summary.csv") && outs[0].contains_key("config.toml"), "{sub}");
        assert_eq!(outs[0], outs[1], "{sub} rerun");
        assert_eq!(outs[0], outs[2], "{sub} thread count");
    }
}

#[test]
fn seed_flag_changes_results_and_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL[0].1);
    let run = |seed: &str| {
        let out = dir.path().join(format!("s{seed}"));
        assert!(depthflow(&["sanity-check", "--config", &cfg, "--seed", seed, "--out", out.to_str().unwrap()], None).status.success());
        read_all(&out)
    };
    let (a, b) = (run("1"), run("2"));
    assert_ne!(a["sanity_draws.csv"], b["sanity_draws.csv"]);
    assert!(String::from_utf8_lossy(&a["config.toml"]).contains("seed = 1"));
}

#[test]
fn heatmap_svg_embeds_the_csv_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL[2].1);
    let out = dir.path().join("o");
    assert!(depthflow(&["corr-heatmap", "--config", &cfg, "--out", out.to_str().unwrap()], None).status.success());
    let svg = std::fs::read_to_string(out.join("corr.svg")).unwrap();
    let m = depthflow::experiments::parse_heatmap_metadata(&svg).unwrap();
    let mut rdr = csv::Reader::from_path(out.join("corr.csv")).unwrap();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.unwrap();
        for j in 0..m.ncols() {
            let v: f64 = rec[j + 1].parse().unwrap();
            assert!(v == m[(i, j)] || (v.is_nan() && m[(i, j)].is_nan()));
        }
    }
    // z = 0 is a fixed point of the bias-free relu network
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.contains("degenerate_inputs,10"), "{summary}");
}

#[test]
fn scale_flag_sets_the_size_preset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "[model]\ndepth = 4\nwidth = 3\n[draws]\nn_draws = 20\n");
    let out = dir.path().join("o");
    let o = depthflow(&["sanity-check", "--config", &cfg, "--scale", "paper", "--out", out.to_str().unwrap()], None);
    assert!(o.status.success());
    assert!(std::fs::read_to_string(out.join("config.toml")).unwrap().contains("scale = \"paper\""));
    let o = depthflow(&["sanity-check", "--config", &cfg, "--scale", "huge"], None);
    assert!(!o.status.success());
}

#[test]
fn failures_carry_a_category_and_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    let o = depthflow(&["abc", "--config", missing.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(3));
    assert!(last_stderr_line(&o).starts_with("error[io]:"));

    let bad = write(dir.path(), "bad.toml", "[model]\ndepht = 3\n");
    let o = depthflow(&["sanity-check", "--config", &bad], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(last_stderr_line(&o).starts_with("error[config]:"));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown field `depht`"));

    let k = write(dir.path(), "k.toml", "[abc]\nobservations = [[0.0, 1.0]]\nprior_draws = 5\nkeep = 6\n");
    let o = depthflow(&["abc", "--config", &k, "--out", dir.path().join("k").to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));

    let nodata = write(dir.path(), "d.toml", "[sgd]\nlearning_rate = 0.1\n");
    let o = depthflow(&["sgd", "--config", &nodata, "--out", dir.path().join("d").to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(last_stderr_line(&o).contains("DEPTHFLOW_DATA"));

    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let o = depthflow(&["sgd", "--config", &nodata, "--out", dir.path().join("e").to_str().unwrap()], Some(empty.to_str().unwrap()));
    assert_eq!(o.status.code(), Some(3));

    let wrong = write(dir.path(), "w.toml", "kind = \"abc\"\n");
    let o = depthflow(&["sanity-check", "--config", &wrong], None);
    assert_eq!(o.status.code(), Some(2));
}
