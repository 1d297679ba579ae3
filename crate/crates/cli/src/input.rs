use std::path::Path;

use billiard_core::config::{SceneConfig, SymbolConfig};
use billiard_core::{Scene, Story, SymbolSurrogate, Vec3};

/// A problem with the user's input; exits with status 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

pub fn scene(path: Option<&Path>) -> anyhow::Result<Scene> {
    let cfg = match path {
        Some(p) => SceneConfig::from_json(&read(p)?).map_err(|e| config_err(format!("{}: {e}", p.display())))?,
        None => SceneConfig::symmetric_two_spheres(),
    };
    cfg.build().map_err(|e| config_err(e.to_string()))
}

pub fn symbol(path: Option<&Path>, scene: &Scene) -> anyhow::Result<SymbolSurrogate> {
    let cfg = match path {
        Some(p) => SymbolConfig::from_json(&read(p)?).map_err(|e| config_err(format!("{}: {e}", p.display())))?,
        None => SymbolConfig::default(),
    };
    cfg.build(scene).map_err(|e| config_err(e.to_string()))
}

/// `"a,b,c"` as a vector.
pub fn parse_vec3(s: &str) -> Result<Vec3, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [a, b, c] => Ok(Vec3::new(a, b, c)),
        _ => Err(format!("expected three comma-separated numbers, got {}", parts.len())),
    }
}

/// `"2,1,2"` as a story; the empty string is the empty story.
pub fn parse_story(s: &str) -> Result<Story, String> {
    let s = s.trim().trim_start_matches('(').trim_end_matches(')');
    if s.is_empty() {
        return Ok(Story::empty());
    }
    let seq: Vec<u8> = s
        .split(',')
        .map(|p| p.trim().parse::<u8>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    Story::new(seq).map_err(|e| e.to_string())
}

