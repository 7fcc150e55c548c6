//! Drive the built binary on small configs.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

pub const BIN: &str = env!("CARGO_BIN_EXE_simplicity-ood");

/// One small config per command.
pub const CONFIGS: &[(&str, &str)] = &[
    (
        "rate",
        "command = \"rate\"\nfamily = \"sinusoidal_link\"\nmaster_seed = 3\nrate.n_grid = [100, 200, 400]\nrate.trials = 3\n",
    ),
    (
        "mlp",
        "command = \"mlp\"\nmaster_seed = 3\nmlp.scheme = \"uniform\"\nmlp.hidden = 8\nmlp.lr = 1e-3\nmlp.epochs = 60\nmlp.trials = 2\nmlp.runs = 2\n",
    ),
    ("assumptions", "command = \"assumptions\"\nfamily = \"degenerate_linear\"\nmaster_seed = 3\n"),
    ("oracle", "command = \"oracle\"\nmaster_seed = 3\noracle.instances = 4\n"),
    ("bound", "command = \"bound\"\nfamily = \"sinusoidal_link\"\nbound.n_list = [1000, 10000]\n"),
];

pub fn run_cli(config: &Path, out: &Path, extra: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.arg(config).arg("--out").arg(out).args(extra);
    match threads {
        Some(t) => cmd.env("SIMPLICITY_OOD_THREADS", t),
        None => cmd.env_remove("SIMPLICITY_OOD_THREADS"),
    };
    cmd.output().expect("binary runs")
}

/// File name -> bytes for every file in `dir`.
pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .expect("output dir exists")
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

/// Run `config` twice into fresh directories; `Ok(files)` iff both runs
/// succeed and produce identical bytes.
pub fn rerun_identical(work: &Path, name: &str, config: &str) -> Result<usize, String> {
    let cfg = work.join(format!("{name}.conf"));
    std::fs::write(&cfg, config).unwrap();
    let mut snaps = Vec::new();
    for pass in 0..2 {
        let out = work.join(format!("{name}-{pass}"));
        let res = run_cli(&cfg, &out, &[], None);
        if !res.status.success() {
            return Err(format!("{name}: exit {:?}: {}", res.status, String::from_utf8_lossy(&res.stderr)));
        }
        snaps.push(snapshot(&out));
    }
    if snaps[0].is_empty() {
        return Err(format!("{name}: no artifacts"));
    }
    if snaps[0] != snaps[1] {
        return Err(format!("{name}: artifacts differ between runs"));
    }
    Ok(snaps[0].len())
}
