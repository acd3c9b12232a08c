//! Assembled prompts are compared byte-for-byte with checked-in fixtures.
//! Run with `UPDATE_GOLDEN=1` to rewrite them after an intentional change.

mod common;

use common::{all_prompts, check, fixture, strategy_prompt};
use critmem::prompts::render_transcript;
use critmem::StrategyKind;

#[test]
fn prompts_match_fixtures() {
    for (name, rendered) in all_prompts() {
        check(&name, &rendered).unwrap();
    }
}

#[test]
fn fixtures_carry_the_verbatim_template_strings() {
    let f = fixture();
    let text = |s| render_transcript(&strategy_prompt(&f, s).messages);
    assert!(text(StrategyKind::EpCrit).contains("make sure to learn from your past mistakes!"));
    assert!(text(StrategyKind::EpLabel).contains("make sure to learn from your past mistakes!"));
    assert!(text(StrategyKind::SemCrit).contains("Here is some helpful advice that will help you make your decision:"));
    assert!(text(StrategyKind::EpSemCrit).contains("Also, here is some additional advice to guide your response:"));
    assert!(text(StrategyKind::EpCrit).contains("Respond only with JSON."));
    assert_eq!(strategy_prompt(&f, StrategyKind::ZeroShot).messages.len(), 1);
}
