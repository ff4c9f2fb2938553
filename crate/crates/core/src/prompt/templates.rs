use super::{AnnotationItem, PromptError, PromptOptions};
use crate::taxonomy::{render_guideline, GuidelineSchema};

pub const ANNOTATE_TASK: &str = "Task: Annotate the text based on the provided annotation guideline.";
pub const VERIFY_TASK: &str = "Task: Check if the annotations of the text based on the provided annotation guideline are correct or not and explain why.";
pub const GENERATE_TASK: &str =
    "Task: Generate a clinical note and annotate the text based on the provided annotation guideline.";

pub const TEXT_START: &str = "|Start of text|";
pub const TEXT_END: &str = "|End of text|";
pub const GUIDELINE_START: &str = "|Start of annotation guideline|";
pub const GUIDELINE_END: &str = "|End of annotation guideline|";
pub const ANNOTATION_START: &str = "|Start of annotation|";
pub const ANNOTATION_END: &str = "|End of annotation|";

const ANNOTATE_FORMAT: &str = r#"Format output as a valid json with the following structure:
[
{
"sentence":str,\\ The sentence that is annotated.
"class":int \\ The class that the sentence belongs to.
}
]"#;

const VERIFY_FORMAT: &str = r#"Format output as a valid json with the following structure:
[
{
"sentence":str,\\ The sentence that is annotated
"class":int, \\ The class that the sentence belongs to.
"decision":bool, \\ Whether the annotation is correct or not.
"reason":str \\ Explain why.
}
]"#;

const GENERATE_FORMAT: &str = r#"Format annotation output as a valid json with the following structure:
[
{
"sentence":str,\\ The sentence that is annotated.
"class":int \\ The class that the sentence belongs to.
}
]"#;

fn guideline_block(guideline: &GuidelineSchema) -> Result<String, PromptError> {
    if guideline.is_empty() {
        return Err(PromptError::EmptyGuideline);
    }
    Ok(format!(
        "{GUIDELINE_START}\n{}\n{GUIDELINE_END}",
        render_guideline(guideline)
    ))
}

fn text_block(text: &str) -> String {
    if text.is_empty() {
        format!("{TEXT_START}\n{TEXT_END}")
    } else {
        format!("{TEXT_START}\n{text}\n{TEXT_END}")
    }
}

fn finish(mut prompt: String, options: &PromptOptions) -> String {
    if !options.suffix.is_empty() {
        prompt.push('\n');
        prompt.push_str(&options.suffix);
    }
    prompt
}

/// Data-to-label prompt: annotate `note` under the guideline.
pub fn build_annotation_prompt(
    note: &str,
    guideline: &GuidelineSchema,
    options: &PromptOptions,
) -> Result<String, PromptError> {
    if note.trim().is_empty() {
        return Err(PromptError::EmptyNote);
    }
    let prompt = format!(
        "{ANNOTATE_TASK}\n\n{}\n\n{}\n{ANNOTATE_FORMAT}",
        text_block(note),
        guideline_block(guideline)?
    );
    Ok(finish(prompt, options))
}

/// Verification prompt: ask for a decision and a reason per annotation.
pub fn build_verification_prompt(
    note: &str,
    guideline: &GuidelineSchema,
    annotations: &[AnnotationItem],
    options: &PromptOptions,
) -> Result<String, PromptError> {
    if annotations.is_empty() {
        return Err(PromptError::EmptyAnnotationSet);
    }
    if note.trim().is_empty() {
        return Err(PromptError::EmptyNote);
    }
    let array = serde_json::to_string_pretty(annotations).expect("annotation items serialize");
    let prompt = format!(
        "{VERIFY_TASK}\n\n{}\n\n{}\n\n{ANNOTATION_START}\n{array}\n{ANNOTATION_END}\n\n{VERIFY_FORMAT}",
        text_block(note),
        guideline_block(guideline)?
    );
    Ok(finish(prompt, options))
}

/// Label-to-data prompt. `steering` fills the text slot.
pub fn build_generation_prompt(
    guideline: &GuidelineSchema,
    steering: Option<&str>,
    options: &PromptOptions,
) -> Result<String, PromptError> {
    let prompt = format!(
        "{GENERATE_TASK}\n\n{}\n\n{}\n\n{GENERATE_FORMAT}",
        text_block(steering.unwrap_or("")),
        guideline_block(guideline)?
    );
    Ok(finish(prompt, options))
}

/// Returns the text between the first `start` line and the following `end`
/// line of a prompt.
pub fn block_between<'a>(prompt: &'a str, start: &str, end: &str) -> Option<&'a str> {
    let s = prompt.find(start)? + start.len();
    let e = prompt[s..].find(end)? + s;
    Some(prompt[s..e].trim_matches('\n'))
}
