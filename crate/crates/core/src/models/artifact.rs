//! Versioned text container for trained models.
//!
//! ```text
//! #gramsight-model v1
//! #kind logreg
//! #n_features 37
//! #config {"kind":"logreg","c":10.0,...}
//! {"kind":"logreg","classes":[...],...}
//! ```
//! Floats are written in shortest round-trip form, so loading is bit-exact.

use super::{Classifier, Model, ModelKind, TrainingConfig};
use crate::error::{Error, Result};

pub const ARTIFACT_VERSION: u32 = 1;

pub fn write_model(model: &Model) -> Result<String> {
    Ok(format!(
        "#gramsight-model v{ARTIFACT_VERSION}\n#kind {}\n#n_features {}\n#config {}\n{}\n",
        model.kind().name(),
        model.n_features(),
        serde_json::to_string(&model.config())?,
        serde_json::to_string(model)?
    ))
}

pub fn read_model(text: &str) -> Result<Model> {
    let mut lines = text.lines();
    let mut header = |prefix: &str, line_no: usize| -> Result<String> {
        lines
            .next()
            .and_then(|l| l.strip_prefix(prefix))
            .map(str::to_string)
            .ok_or_else(|| Error::parse(line_no, format!("expected `{prefix}`")))
    };
    let version = header("#gramsight-model v", 1)?;
    if version.parse::<u32>().ok() != Some(ARTIFACT_VERSION) {
        return Err(Error::parse(1, format!("unsupported artifact version `{version}`")));
    }
    let kind = header("#kind ", 2)?;
    let n_features: usize = header("#n_features ", 3)?
        .parse()
        .map_err(|_| Error::parse(3, "bad n_features"))?;
    let config: TrainingConfig = serde_json::from_str(&header("#config ", 4)?)?;
    let body = lines.next().ok_or_else(|| Error::parse(5, "missing model body"))?;
    let model: Model = serde_json::from_str(body)?;
    let kind_ok = [ModelKind::LogReg, ModelKind::Forest, ModelKind::Mlp]
        .into_iter()
        .any(|k| k.name() == kind && k == model.kind());
    if !kind_ok || model.n_features() != n_features || model.config() != config {
        return Err(Error::parse(5, "model body disagrees with its header"));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{LogRegConfig, LogRegOvr};

    #[test]
    fn roundtrip_is_bit_exact() {
        let model = Model::LogReg(LogRegOvr {
            classes: vec![1, 3],
            n_features: 2,
            weights: vec![vec![0.1 + 0.2, -1e-300], vec![std::f64::consts::PI, 4.3916]],
            intercepts: vec![-4.28426, 1.0 / 3.0],
            config: LogRegConfig::default(),
        });
        let text = write_model(&model).unwrap();
        assert!(text.starts_with("#gramsight-model v1\n#kind logreg\n#n_features 2\n"));
        assert_eq!(read_model(&text).unwrap(), model);
        assert!(read_model(&text.replace("v1", "v9")).is_err());
        assert!(read_model(&text.replace("#n_features 2", "#n_features 3")).is_err());
    }
}
