//! Prompt construction from the versioned template files.
//!
//! Two templates exist: the strategy-free template used for bare queries and
//! for strategy synthesis, and the strategy-based template that prepends a
//! block of retrieved `[Question]`/`[Strategy]`/`[Answer]` examples. Both end
//! with the `[Strategy]:` / `[Answer]:` scaffold the output parser expects.

/// Header line introducing the retrieved-strategy examples.
pub const STRATEGY_EXAMPLES_HEADER: &str = "Using the following problem examples:";

/// Marker that separates the examples section from the current question.
pub const QUESTION_LEAD_IN: &str = "Now answer this question:";

const STRATEGY_FREE_TEMPLATE: &str = include_str!("../templates/strategy_free.v1.txt");
const STRATEGY_BASED_TEMPLATE: &str = include_str!("../templates/strategy_based.v1.txt");

/// Render the strategy-free prompt for a bare question.
pub fn strategy_free_prompt(question: &str) -> String {
    STRATEGY_FREE_TEMPLATE
        .trim_end_matches('\n')
        .replace("{question}", question)
}

/// Render the strategy-based prompt: `strategy_block` is the already
/// formatted examples block (see `repo::format_strategy_block`), which
/// starts with [`STRATEGY_EXAMPLES_HEADER`].
pub fn strategy_based_prompt(strategy_block: &str, question: &str) -> String {
    STRATEGY_BASED_TEMPLATE
        .trim_end_matches('\n')
        .replace("{strategy}", strategy_block)
        .replace("{question}", question)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_free_prompt_substitutes_question() {
        let p = strategy_free_prompt("what is 2 + 2?");
        assert!(p.contains("[Question]: what is 2 + 2?"));
        assert!(p.ends_with("[Answer]:"));
        assert!(p.starts_with("Based on the question below"));
        // The worked example survives verbatim.
        assert!(p.contains("[Question]: x + y = 10, y = 4, what is x?"));
    }

    #[test]
    fn strategy_based_prompt_places_block_first() {
        let block = format!("{STRATEGY_EXAMPLES_HEADER}\n1. [Question]: q\n[Strategy]: s\n[Answer]: a");
        let p = strategy_based_prompt(&block, "the current question");
        assert!(p.starts_with(STRATEGY_EXAMPLES_HEADER));
        assert!(p.contains(QUESTION_LEAD_IN));
        assert!(p.contains("[Question]: the current question"));
        assert!(p.ends_with("[Answer]:"));
        // No worked example in the strategy-based template.
        assert!(!p.contains("x + y = 10"));
    }
}
