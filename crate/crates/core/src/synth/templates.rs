//! Instruction strings wrapped around query and candidate inputs.

use crate::error::{Error, Result};

/// Instruction prefix for location-conditioned queries; the caption follows
/// after `": "`.
pub const LOCATION_INSTRUCTION: &str =
    "Find me an image containing the object in the given image with the following caption";

/// Instruction used for candidates that carry only an image.
pub const CANDIDATE_INSTRUCTION: &str = "Represent the given image";

const INSTANCE_HEAD: &str = "Given the ";
const INSTANCE_MIDDLE: &str = " in the image, find an everyday image that contains the ";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryMode {
    Location,
    Instance,
}

/// Query text plus whether an image slot accompanies it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryText {
    pub text: String,
    pub has_image: bool,
}

pub fn build_query_text(mode: QueryMode, caption_or_class: &str, has_image: bool) -> Result<QueryText> {
    let text = match mode {
        QueryMode::Location => location_query(caption_or_class)?,
        QueryMode::Instance => instance_query(caption_or_class)?,
    };
    Ok(QueryText { text, has_image })
}

pub fn location_query(caption: &str) -> Result<String> {
    let caption = caption.trim();
    if caption.is_empty() {
        return Err(Error::Validation("location query needs a non-empty caption".into()));
    }
    Ok(format!("{LOCATION_INSTRUCTION}: {caption}"))
}

pub fn instance_query(class_name: &str) -> Result<String> {
    let class_name = class_name.trim();
    if class_name.is_empty() {
        return Err(Error::Validation("instance query needs a non-empty class name".into()));
    }
    Ok(format!("{INSTANCE_HEAD}{class_name}{INSTANCE_MIDDLE}{class_name}."))
}

pub fn candidate_text() -> &'static str {
    CANDIDATE_INSTRUCTION
}

/// True when `text` opens with one of the query instructions.
pub fn has_instruction_prefix(text: &str) -> bool {
    if text.starts_with(LOCATION_INSTRUCTION) {
        return true;
    }
    text.strip_prefix(INSTANCE_HEAD)
        .is_some_and(|rest| rest.contains(INSTANCE_MIDDLE))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn location_template() {
        let q = build_query_text(
            QueryMode::Location,
            "The clock is in the middle of the building.",
            true,
        )
        .unwrap();
        assert_eq!(
            q.text,
            "Find me an image containing the object in the given image with the following caption: The clock is in the middle of the building."
        );
        assert!(q.has_image);
    }

    #[test]
    fn instance_template() {
        let q = build_query_text(QueryMode::Instance, "sheep", true).unwrap();
        assert_eq!(
            q.text,
            "Given the sheep in the image, find an everyday image that contains the sheep."
        );
    }

    #[test]
    fn empty_inputs_rejected() {
        assert!(build_query_text(QueryMode::Instance, "", true).is_err());
        assert!(build_query_text(QueryMode::Location, "  ", false).is_err());
    }

    #[test]
    fn candidate_text_is_fixed() {
        assert_eq!(candidate_text(), "Represent the given image");
        assert_eq!(candidate_text(), candidate_text());
        assert!(!candidate_text().contains(':'));
    }

    #[test]
    fn prefix_detection() {
        assert!(has_instruction_prefix(&location_query("x").unwrap()));
        assert!(has_instruction_prefix(&instance_query("bottle").unwrap()));
        assert!(!has_instruction_prefix("Given the bottle"));
        assert!(!has_instruction_prefix(CANDIDATE_INSTRUCTION));
    }
}
