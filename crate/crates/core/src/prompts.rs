//! Prompt templates. The text lives in `prompts/*.txt` next to the crate
//! manifest and is compiled in.

pub const EXTRACT_TRIPLES: &str = include_str!("../prompts/extract_triples.txt");
pub const REPAIR_TRIPLES: &str = include_str!("../prompts/repair_triples.txt");
pub const KEY_ELEMENTS: &str = include_str!("../prompts/key_elements.txt");
pub const ANSWER_PARAMETRIC: &str = include_str!("../prompts/answer_parametric.txt");
pub const ANSWER_AUGMENTED: &str = include_str!("../prompts/answer_augmented.txt");

/// Substitutes `{name}` placeholders in one pass, so values containing braces
/// are never re-expanded. Unknown placeholders are left as-is. The template's
/// trailing newline is dropped.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let template = template.trim_end_matches('\n');
    let mut out = String::with_capacity(template.len() + vars.iter().map(|(_, v)| v.len()).sum::<usize>());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let value = after.find('}').and_then(|close| {
            vars.iter()
                .find(|(k, _)| *k == &after[..close])
                .map(|(_, v)| (close, *v))
        });
        match value {
            Some((close, v)) => {
                out.push_str(v);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

pub fn extract_triples(segment: &str) -> String {
    render(EXTRACT_TRIPLES, &[("segment", segment)])
}

pub fn repair_triples(segment: &str, reply: &str, error: &str) -> String {
    render(
        REPAIR_TRIPLES,
        &[("segment", segment), ("reply", reply), ("error", error)],
    )
}

pub fn key_elements(query: &str) -> String {
    render(KEY_ELEMENTS, &[("query", query)])
}

pub fn answer_parametric(query: &str) -> String {
    render(ANSWER_PARAMETRIC, &[("query", query)])
}

pub fn answer_augmented(query: &str, context: &str) -> String {
    render(ANSWER_AUGMENTED, &[("query", query), ("context", context)])
}
