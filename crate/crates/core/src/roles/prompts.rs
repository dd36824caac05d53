//! The frozen prompt catalog and its renderer. Templates ship as byte-frozen
//! text assets; rendering substitutes `{slot}` placeholders and refuses
//! templates with unresolved slots.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TemplateId {
    GenerateInformal,
    VerifyInformal,
    RefineInformal,
    SystemFormal,
    GenerateFormal,
    FixFormal,
    CommentProof,
}

pub const ALL_TEMPLATES: [TemplateId; 7] = [
    TemplateId::GenerateInformal,
    TemplateId::VerifyInformal,
    TemplateId::RefineInformal,
    TemplateId::SystemFormal,
    TemplateId::GenerateFormal,
    TemplateId::FixFormal,
    TemplateId::CommentProof,
];

/// Every placeholder name the catalog may use.
pub const SLOT_SCHEMA: &[&str] = &[
    "problem",
    "solution",
    "feedback",
    "formal_statement",
    "informal_solution",
    "error_message",
    "llm_comments",
    "search_results",
    "lean_code",
    "student_solution",
];

pub fn template(id: TemplateId) -> &'static str {
    match id {
        TemplateId::GenerateInformal => include_str!("../../assets/prompts/generate_informal.txt"),
        TemplateId::VerifyInformal => include_str!("../../assets/prompts/verify_informal.txt"),
        TemplateId::RefineInformal => include_str!("../../assets/prompts/refine_informal.txt"),
        TemplateId::SystemFormal => include_str!("../../assets/prompts/system_formal.txt"),
        TemplateId::GenerateFormal => include_str!("../../assets/prompts/generate_formal.txt"),
        TemplateId::FixFormal => include_str!("../../assets/prompts/fix_formal.txt"),
        TemplateId::CommentProof => include_str!("../../assets/prompts/comment_proof.txt"),
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("missing slot '{{{0}}}' for template")]
    MissingSlot(String),
}

/// Placeholders appearing in a template, in order of first occurrence.
/// Only lowercase snake-case names in the slot schema count; literal braces
/// such as `\boxed{{...}}` are left alone.
pub fn placeholders(template_text: &str) -> Vec<&'static str> {
    let mut found = Vec::new();
    for slot in SLOT_SCHEMA {
        if template_text.contains(&format!("{{{slot}}}")) && !found.contains(slot) {
            found.push(*slot);
        }
    }
    // Order by first occurrence in the template.
    let mut with_pos: Vec<(usize, &'static str)> = found
        .into_iter()
        .map(|s| (template_text.find(&format!("{{{s}}}")).unwrap(), s))
        .collect();
    with_pos.sort();
    with_pos.into_iter().map(|(_, s)| s).collect()
}

/// Substitute slots into a template. Every placeholder in the template must
/// be present in `slots`; extra slots are ignored.
pub fn render_prompt(
    id: TemplateId,
    slots: &BTreeMap<&str, String>,
) -> Result<String, PromptError> {
    let text = template(id);
    let mut rendered = text.to_string();
    for slot in placeholders(text) {
        let value = slots
            .get(slot)
            .ok_or_else(|| PromptError::MissingSlot(slot.to_string()))?;
        rendered = rendered.replace(&format!("{{{slot}}}"), value);
    }
    Ok(rendered)
}
