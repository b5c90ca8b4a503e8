use super::chat::ChatMessage;
use super::TurnRequest;

const ROUND_INSTRUCTION: &str = include_str!("../../assets/prompts/round_instruction_v1.txt");

/// Builds the chat messages for one agent turn.
///
/// Hidden moderator guidance goes only into the system message; the user
/// message carries the public history and the round instruction.
pub fn assemble_prompt(req: &TurnRequest<'_>) -> Vec<ChatMessage> {
    let mut system = req.role.role_prompt.clone();
    if !req.hidden_guidance.is_empty() {
        system.push_str(
            "\n\nPrivate guidance for this round only. Do not mention or quote it; \
             let it shape what you say:",
        );
        for note in &req.hidden_guidance {
            system.push_str("\n- ");
            system.push_str(note);
        }
    }

    let start = f64::from(req.round - 1) * req.minutes_per_round;
    let end = f64::from(req.round) * req.minutes_per_round;
    let instruction = ROUND_INSTRUCTION
        .trim_end()
        .replace("{round}", &req.round.to_string())
        .replace("{total_rounds}", &req.total_rounds.to_string())
        .replace("{start}", &format_minutes(start))
        .replace("{end}", &format_minutes(end))
        .replace("{person}", &req.role.historical_person)
        .replace("{role}", req.role.role_name.as_str());

    let history = if req.history_rendering.is_empty() {
        "(no entries yet)\n".to_owned()
    } else {
        req.history_rendering.clone()
    };
    let user = format!("Control-room log so far:\n{history}\n{instruction}");

    vec![ChatMessage::system(system), ChatMessage::user(user)]
}

fn format_minutes(m: f64) -> String {
    if m.fract() == 0.0 {
        format!("{m:.0}")
    } else {
        format!("{m:.1}")
    }
}
