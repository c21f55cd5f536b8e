//! Independent reference implementations used to check the library.

/// Payload of the last `\boxed{` whose brace closes, computed by brute force:
/// for every candidate end, recount depth over the whole prefix.
pub fn boxed_brute_force(s: &str) -> Option<String> {
    let opener = "\\boxed{";
    let starts: Vec<usize> = s.char_indices().map(|(i, _)| i).filter(|&i| s[i..].starts_with(opener)).collect();
    for &start in starts.iter().rev() {
        let body: Vec<char> = s[start + opener.len()..].chars().collect();
        for end in 0..body.len() {
            if body[end] != '}' || escaped(&body, end) {
                continue;
            }
            if depth(&body[..end]) == 0 && (0..end).all(|j| body[j] != '}' || escaped(&body, j) || depth(&body[..j]) > 0) {
                return Some(body[..end].iter().collect());
            }
        }
    }
    None
}

/// Odd run of backslashes right before `i`.
fn escaped(chars: &[char], i: usize) -> bool {
    chars[..i].iter().rev().take_while(|c| **c == '\\').count() % 2 == 1
}

fn depth(chars: &[char]) -> i64 {
    let mut d = 0;
    for i in 0..chars.len() {
        if escaped(chars, i) {
            continue;
        }
        match chars[i] {
            '{' => d += 1,
            '}' => d -= 1,
            _ => {}
        }
    }
    d
}

/// Pair check over a raw exchange log, written without the library helper.
pub fn every_exec_answered_once(log: &[codeloop_core::supervisor::ExchangeEvent]) -> bool {
    use codeloop_core::supervisor::ExchangeEvent::*;
    let sent: Vec<u64> = log
        .iter()
        .filter_map(|e| match e {
            Sent { kind: "exec", id } => Some(*id),
            _ => None,
        })
        .collect();
    let answered: Vec<u64> = log
        .iter()
        .filter_map(|e| match e {
            Received { id, .. } | Synthesized { id, .. } => Some(*id),
            _ => None,
        })
        .collect();
    sent.iter().all(|id| answered.iter().filter(|a| *a == id).count() == 1)
        && answered.iter().all(|a| sent.contains(a))
}
