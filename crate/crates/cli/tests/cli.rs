use std::path::Path;
use std::process::{Command, Output};

use mzmetro_cli::config::ConfigFile;

fn mzmetro(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_mzmetro"));
    c.args(args).env_remove("METROLOGY_THREADS");
    for (k, v) in env {
        c.env(k, v);
    }
    c.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

const HEADER: &str = "state,scheme,W0,theta_bar,mu,mse,stderr,taylor_delta,crb,seed";

#[test]
fn zero_repetitions_give_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("empty.csv");
    let o = mzmetro(&["simulate", "--state", "coherent", "--mu-max", "0", "--out", out.to_str().unwrap()], &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read(&out), format!("{HEADER}\n"));

    let loss = dir.path().join("loss.csv");
    let o = mzmetro(&["loss", "--mu-max", "0", "--out", loss.to_str().unwrap()], &[]);
    assert_eq!(code(&o), 0);
    assert_eq!(read(&loss), format!("{HEADER},eta,encoding\n"));
}

#[test]
fn same_seed_same_bytes_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: &str, threads: &str| {
        let p = dir.path().join(name);
        let args = ["simulate", "--state", "noon", "--scheme", "counting-even", "--mu-max", "14", "--samples", "300", "--seed", seed, "--out", p.to_str().unwrap()];
        let o = mzmetro(&args, &[("METROLOGY_THREADS", threads)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        read(&p)
    };
    let a = run("a.csv", "11", "1");
    let b = run("b.csv", "11", "3");
    let c = run("c.csv", "12", "1");
    assert_eq!(a, b);
    assert_ne!(a, c);
    // beyond the exact range the rows carry a Monte Carlo error bar
    let last = a.lines().last().unwrap();
    assert!(last.starts_with("noon,counting-even,") && last.contains(",14,"));
    assert_ne!(last.split(',').nth(6).unwrap(), "0.000000000e0");
}

#[test]
fn numbers_are_scientific_with_enough_digits() {
    let o = mzmetro(&["simulate", "--state", "coherent", "--mu-max", "2"], &[]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    for cell in [row[2], row[3], row[5], row[6], row[7], row[8]] {
        let (mant, _) = cell.split_once('e').expect("scientific");
        assert!(mant.trim_start_matches('-').replace('.', "").len() >= 6, "{cell}");
    }
    let mse: f64 = row[5].parse().unwrap();
    assert!((mse - 0.144).abs() < 5e-4, "{mse}");
}

#[test]
fn exit_codes() {
    assert_eq!(code(&mzmetro(&["simulate", "--state", "laser"], &[])), 2);
    assert_eq!(code(&mzmetro(&["simulate", "--state", "noon", "--scheme", "heterodyne"], &[])), 2);
    assert_eq!(code(&mzmetro(&["simulate", "--state", "tsv", "--cutoff", "10"], &[])), 2);
    assert_eq!(code(&mzmetro(&["simulate", "--state", "noon", "--mu-max", "1"], &[("METROLOGY_THREADS", "zero")])), 2);
    assert_eq!(code(&mzmetro(&["simulate", "--state", "noon", "--bogus"], &[])), 2);
    assert_eq!(code(&mzmetro(&["simulate", "--config", "/nonexistent.cfg"], &[])), 2);
    assert_eq!(code(&mzmetro(&[], &[])), 2);
    // an unbounded prior variance overflows the bound
    assert_eq!(code(&mzmetro(&["personick", "--state", "noon", "--w0", "1e300"], &[])), 3);
}

#[test]
fn config_file_runs_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let curve = dir.path().join("curve.csv");
    let spectrum = dir.path().join("spec.csv");
    let cfg = format!(
        r#"
[[experiment]]
state = {{ name = "noon" }}
scheme = "parity"
mu_max = 3
outputs = {{ csv = "{c}" }}

[[experiment]]
state = {{ name = "noon" }}
scheme = "collective"
mu_max = 3
outputs = {{ csv = "{c}" }}

[[experiment]]
kind = "personick"
state = {{ name = "noon" }}
outputs = {{ spectrum = "{s}" }}
"#,
        c = curve.display(),
        s = spectrum.display()
    );
    let path = dir.path().join("run.cfg");
    std::fs::write(&path, &cfg).unwrap();
    let parsed = ConfigFile::load(&path).unwrap();
    assert_eq!(ConfigFile::parse(&parsed.to_toml()).unwrap(), parsed);

    let o = mzmetro(&["--config", path.to_str().unwrap()], &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = read(&curve);
    assert_eq!(text.lines().count(), 7);
    // parity and the collective bound agree with the optimal column at mu = 1
    let mse = |l: &str| l.split(',').nth(5).unwrap().parse::<f64>().unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!((mse(lines[1]) - mse(lines[4])).abs() < 1e-9);
    assert_eq!(read(&spectrum).lines().count(), 3);

    // a subcommand with --config runs only its kind, with flag overrides
    let o = mzmetro(&["simulate", "--config", path.to_str().unwrap(), "--mu-max", "1"], &[]);
    assert_eq!(code(&o), 0);
    assert_eq!(read(&curve).lines().count(), 3);

    std::fs::write(&path, cfg.replace("mu_max = 3\n", "mu_max = 3\nmu_min = 1\n")).unwrap();
    assert_eq!(code(&mzmetro(&["--config", path.to_str().unwrap()], &[])), 2);
}

#[test]
fn state_info_reports_statistics() {
    let o = mzmetro(&["state-info", "--state", "noon"], &[]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    let v = |i: usize| row[i].parse::<f64>().unwrap();
    assert_eq!(row[0], "noon");
    assert!((v(3) - 2.0).abs() < 1e-12);
    assert!(v(4).abs() < 1e-12);
    assert!((v(5) + 1.0).abs() < 1e-12);
    assert!((v(6) - 4.0).abs() < 1e-12);

    // vacuum twin squeezing: no photons, J undefined, still a clean exit
    let o = mzmetro(&["state-info", "--state", "tsv", "--r", "0", "--cutoff", "4"], &[]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("tsv,4,0.000000000e0,0.000000000e0,,,"));
    assert!(String::from_utf8_lossy(&o.stderr).contains("J undefined"));
}

#[test]
fn state_info_reads_settling_point_from_curve() {
    let dir = tempfile::tempdir().unwrap();
    let curve = dir.path().join("tsv.csv");
    let o = mzmetro(&["simulate", "--state", "tsv", "--mu-max", "12", "--samples", "2000", "--out", curve.to_str().unwrap()], &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = mzmetro(&["state-info", "--state", "tsv", "--curve", curve.to_str().unwrap()], &[]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().nth(1).unwrap().rsplit(',').next().unwrap(), "5");
}

#[test]
fn shipped_experiment_files_parse_and_round_trip() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../experiments");
    let mut seen = vec![];
    for entry in std::fs::read_dir(&dir).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().and_then(|e| e.to_str()) != Some("cfg") {
            continue;
        }
        let cfg = ConfigFile::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        assert_eq!(ConfigFile::parse(&cfg.to_toml()).unwrap(), cfg, "{}", p.display());
        seen.push(p.file_stem().unwrap().to_string_lossy().into_owned());
    }
    for n in 2..=8 {
        assert!(seen.contains(&format!("fig{n}")), "fig{n}.cfg missing");
    }
}
