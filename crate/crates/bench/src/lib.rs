//! Fixtures shared by the benchmarks.

use dcaudit_core::execution::{Action, PartyScript};

/// A board workload of `n` posts, each captured, fetched after, and
/// deleted again every third post.
pub fn board_workload(prefix: &str, n: usize) -> PartyScript {
    let mut actions = Vec::with_capacity(n * 3);
    for i in 0..n {
        actions.push(Action::Post { key: format!("{prefix}{i}"), msg: format!("m{i}-{{rand}}"), via: vec![] });
        actions.push(Action::Capture { name: format!("t{i}") });
        actions.push(Action::Fetch { via: vec![] });
        if i % 3 == 2 {
            actions.push(Action::Delete { token: format!("t{i}") });
        }
    }
    PartyScript::new(actions)
}

pub fn universe(n: usize) -> Vec<Vec<u8>> {
    (1..=n).map(|i| format!("k{i}").into_bytes()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn workload_deletes_every_third_post() {
        let script = board_workload("y", 6);
        let deletes = script.actions.iter().filter(|a| matches!(a, Action::Delete { .. })).count();
        assert_eq!(deletes, 2);
    }
}
