//! Prompt templates: UTF-8 files with named placeholders, versioned by
//! filename. A registry resolves template ids against an optional override
//! directory, falling back to the bundle shipped with the crate.

use std::collections::BTreeMap;
use std::path::PathBuf;

use super::{BackendError, Query, QueryKind};
use crate::globalize::Axis;

const EMBEDDED: &[(&str, &str)] = &[
    ("classify_v1", include_str!("../../templates/classify_v1.txt")),
    ("segment_v1", include_str!("../../templates/segment_v1.txt")),
    ("multilabel_v1", include_str!("../../templates/multilabel_v1.txt")),
    ("presence_v1", include_str!("../../templates/presence_v1.txt")),
    ("same_object_v1", include_str!("../../templates/same_object_v1.txt")),
    ("pair_depth_v1", include_str!("../../templates/pair_depth_v1.txt")),
    ("pair_axis_v1", include_str!("../../templates/pair_axis_v1.txt")),
    ("reminder_v1", include_str!("../../templates/reminder_v1.txt")),
];

#[derive(Debug, Clone)]
pub struct TemplateRegistry {
    dir: Option<PathBuf>,
    reminder_id: String,
}

impl Default for TemplateRegistry {
    fn default() -> Self {
        Self {
            dir: None,
            reminder_id: "reminder_v1".to_string(),
        }
    }
}

impl TemplateRegistry {
    pub fn with_dir(dir: Option<PathBuf>) -> Self {
        Self {
            dir,
            ..Self::default()
        }
    }

    pub fn set_reminder(&mut self, id: &str) {
        self.reminder_id = id.to_string();
    }

    /// Template text by id: `<dir>/<id>.txt` when present, else the
    /// embedded bundle.
    pub fn get(&self, id: &str) -> Result<String, BackendError> {
        if let Some(dir) = &self.dir {
            let path = dir.join(format!("{id}.txt"));
            if path.is_file() {
                return std::fs::read_to_string(&path)
                    .map_err(|e| BackendError::Template(format!("reading {}: {e}", path.display())));
            }
        }
        EMBEDDED
            .iter()
            .find(|(name, _)| *name == id)
            .map(|(_, text)| text.to_string())
            .ok_or_else(|| BackendError::Template(format!("unknown template id {id:?}")))
    }

    /// Render the full prompt text for a query.
    pub fn render(&self, query: &Query) -> Result<String, BackendError> {
        let template = self.get(&query.template_id)?;
        let mut vars: BTreeMap<&str, String> = BTreeMap::new();
        let options = query.options();
        vars.insert("options", options.join(", "));
        vars.insert("relations", quoted_or_list(&options));
        match &query.kind {
            QueryKind::MultiChoice { items, history, .. } => {
                vars.insert("count", items.len().to_string());
                let item_lines: Vec<String> = items
                    .iter()
                    .enumerate()
                    .map(|(i, item)| format!("{}: {}", i + 1, item.tag))
                    .collect();
                vars.insert("items", item_lines.join("\n"));
                let hist = if history.is_empty() {
                    "(none)".to_string()
                } else {
                    history
                        .iter()
                        .map(|(tag, opt)| format!("{tag}: {opt}"))
                        .collect::<Vec<_>>()
                        .join("\n")
                };
                vars.insert("history", hist);
            }
            QueryKind::Presence { class_name, .. } => {
                vars.insert("class", class_name.clone());
            }
            QueryKind::PairOrder { axis, .. } => {
                vars.insert("direction", direction_text(*axis).to_string());
            }
            _ => {}
        }
        substitute(&template, &vars)
    }

    /// The stricter re-prompt appended after an unparsable reply.
    pub fn reminder(&self, query: &Query) -> Result<String, BackendError> {
        let template = self.get(&self.reminder_id)?;
        let mut vars: BTreeMap<&str, String> = BTreeMap::new();
        vars.insert("options", quoted_or_list(&query.options()));
        substitute(&template, &vars)
    }
}

fn quoted_or_list(options: &[String]) -> String {
    let quoted: Vec<String> = options.iter().map(|o| format!("\"{o}\"")).collect();
    match quoted.len() {
        0 => String::new(),
        1 => quoted[0].clone(),
        2 => format!("{} or {}", quoted[0], quoted[1]),
        _ => format!(
            "{}, or {}",
            quoted[..quoted.len() - 1].join(", "),
            quoted[quoted.len() - 1]
        ),
    }
}

fn direction_text(axis: Axis) -> &'static str {
    match axis {
        Axis::X => "the camera's right",
        Axis::Y => "upwards",
        Axis::Z => "the camera, out of the scene",
        Axis::Depth => "greater distance from the camera",
    }
}

/// Replace every `{name}` placeholder; unresolved placeholders are an
/// error so edited templates fail loudly.
fn substitute(template: &str, vars: &BTreeMap<&str, String>) -> Result<String, BackendError> {
    let mut out = template.to_string();
    for (key, value) in vars {
        out = out.replace(&format!("{{{key}}}"), value);
    }
    if let Some(start) = out.find('{') {
        let tail = &out[start + 1..];
        if let Some(end) = tail.find('}') {
            let name = &tail[..end];
            if !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(BackendError::Template(format!(
                    "unresolved placeholder {{{name}}}"
                )));
            }
        }
    }
    Ok(out.trim_end().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::RegionSpec;
    use crate::core::PixelBox;

    #[test]
    fn presence_template_renders() {
        let reg = TemplateRegistry::default();
        let query = Query {
            image_id: "img".into(),
            template_id: "presence_v1".into(),
            kind: QueryKind::Presence {
                images: vec![],
                window: PixelBox::new(0, 0, 4, 4).unwrap(),
                class_name: "sheep".into(),
            },
        };
        let text = reg.render(&query).unwrap();
        assert!(text.contains("sheep"));
        assert!(text.contains("\"yes\" or \"no\""));
        let reminder = reg.reminder(&query).unwrap();
        assert!(reminder.contains("\"yes\" or \"no\""));
    }

    #[test]
    fn segment_template_renders_items_and_history() {
        use std::sync::Arc;
        let reg = TemplateRegistry::default();
        let query = Query {
            image_id: "img".into(),
            template_id: "segment_v1".into(),
            kind: QueryKind::MultiChoice {
                items: vec![
                    super::super::ChoiceItem::new(vec![], RegionSpec::FullImage, "superpixel 4"),
                    super::super::ChoiceItem::new(vec![], RegionSpec::FullImage, "superpixel 9"),
                ],
                options: Arc::new(vec!["grass".into(), "sky".into()]),
                history: vec![("superpixel 1".into(), "sky".into())],
            },
        };
        let text = reg.render(&query).unwrap();
        assert!(text.contains("1: superpixel 4"));
        assert!(text.contains("2: superpixel 9"));
        assert!(text.contains("superpixel 1: sky"));
        assert!(text.contains("grass, sky"));
    }

    #[test]
    fn unknown_ids_and_unresolved_placeholders_error() {
        let reg = TemplateRegistry::default();
        assert!(reg.get("missing_v9").is_err());
        let vars = BTreeMap::new();
        assert!(substitute("hello {options}", &vars).is_err());
        assert!(substitute("a set {1, 2} is fine", &vars).is_ok());
    }

    #[test]
    fn directory_overrides_embedded() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("presence_v1.txt"), "override {class} {relations}").unwrap();
        let reg = TemplateRegistry::with_dir(Some(dir.path().to_path_buf()));
        let query = Query {
            image_id: "img".into(),
            template_id: "presence_v1".into(),
            kind: QueryKind::Presence {
                images: vec![],
                window: PixelBox::new(0, 0, 2, 2).unwrap(),
                class_name: "cow".into(),
            },
        };
        assert_eq!(reg.render(&query).unwrap(), "override cow \"yes\" or \"no\"");
    }
}
