//! Output files. Every artifact is written to a temporary sibling and
//! renamed into place, so readers never see a partial file.

use std::fs;
use std::io::Write;
use std::path::Path;

use cbrw_core::RegimeReport;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const REGIME: &str = "regime.json";
pub const SNAPSHOTS: &str = "snapshots.csv";
pub const RUNS: &str = "runs.json";
pub const SHELL_REPORT: &str = "shell_report.csv";
pub const DIRECTIONAL: &str = "directional.csv";
pub const SURFACE: &str = "surface.csv";
pub const VOLTERRA: &str = "volterra.csv";
pub const PLOT_MANIFEST: &str = "plot_manifest.json";

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
    tmp_name.push(".tmp");
    let tmp = dir.join(tmp_name);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    result.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        CliError::io(path, e)
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// `regime.json`: the report plus the hash of the scenario that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeFile {
    pub config_hash: String,
    #[serde(flatten)]
    pub report: RegimeReport,
}

pub fn read_regime(out: &Path) -> Result<RegimeFile, CliError> {
    let path = out.join(REGIME);
    if !path.exists() {
        return Err(CliError::MissingPrerequisite {
            file: path,
            command: "solve-nu",
        });
    }
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotSeries {
    pub file: String,
    pub label: String,
    pub x: String,
    pub y: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group_by: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotManifest {
    pub config_hash: String,
    pub series: Vec<PlotSeries>,
}

/// Describe every plottable artifact currently in `out`.
pub fn write_plot_manifest(out: &Path, config_hash: &str, dimension: usize) -> Result<(), CliError> {
    let coord = |i: usize| format!("x_{i}");
    let mut series = Vec::new();
    let mut add = |file: &str, label: &str, x: String, y: Vec<String>, group_by: Option<&str>, error: Option<&str>| {
        if out.join(file).exists() {
            series.push(PlotSeries {
                file: file.into(),
                label: label.into(),
                x,
                y,
                group_by: group_by.map(Into::into),
                error: error.map(Into::into),
            });
        }
    };
    let surface_y = if dimension >= 2 { (2..=dimension).map(coord).collect() } else { vec![] };
    add(SURFACE, "limiting front shape", coord(1), surface_y, Some("orthant"), None);
    add(
        SHELL_REPORT,
        "shell containment",
        "time".into(),
        vec!["frac_outside_o".into(), "frac_beyond_q".into()],
        None,
        None,
    );
    let directional_y = match fs::read_to_string(out.join(DIRECTIONAL)) {
        Ok(text) => text.lines().next().unwrap_or("").split(',').skip(1).map(String::from).collect(),
        Err(_) => vec![],
    };
    add(DIRECTIONAL, "direction targets reached", "time".into(), directional_y, None, None);
    add(SNAPSHOTS, "particle positions", coord(1), (2..=dimension).map(coord).collect(), Some("time"), None);
    add(VOLTERRA, "target hit probability", "t".into(), vec!["e".into()], None, Some("stderr"));
    write_json(
        &out.join(PLOT_MANIFEST),
        &PlotManifest {
            config_hash: config_hash.into(),
            series,
        },
    )
}
