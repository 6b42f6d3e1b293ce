//! Plain-text normal-form games for exchanging instances with external
//! solvers.
//!
//! ```text
//! players 2
//! actions 3 2
//! payoffs 0
//! <one line per profile prefix: the last player's actions vary along a line>
//! payoffs 1
//! ...
//! ```
//!
//! Profiles are row-major with player 0 the most significant index, the
//! same order as [`MatrixGame`]. Blank lines and `#` comments are ignored.

use std::fmt::Write as _;

use lteu_core::game::{GameError, MatrixGame};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SmallGameError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error(transparent)]
    Game(#[from] GameError),
}

pub fn write_small_game(game: &MatrixGame) -> String {
    let sizes = game.sizes();
    let mut out = String::new();
    writeln!(out, "players {}", sizes.len()).unwrap();
    let counts: Vec<String> = sizes.iter().map(|s| s.to_string()).collect();
    writeln!(out, "actions {}", counts.join(" ")).unwrap();
    let row = sizes.last().copied().unwrap_or(1).max(1);
    for (p, payoffs) in game.payoffs().iter().enumerate() {
        writeln!(out, "payoffs {p}").unwrap();
        for chunk in payoffs.chunks(row) {
            let line: Vec<String> = chunk.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", line.join(" ")).unwrap();
        }
    }
    out
}

pub fn read_small_game(text: &str) -> Result<MatrixGame, SmallGameError> {
    let mut tokens = text
        .lines()
        .enumerate()
        .flat_map(|(i, l)| {
            let content = l.split('#').next().unwrap_or("");
            content.split_whitespace().map(move |t| (i + 1, t))
        })
        .peekable();
    let mut last_line = 0;
    let mut next = |what: &str| -> Result<(usize, &str), SmallGameError> {
        let t = tokens.next().ok_or_else(|| SmallGameError::Syntax {
            line: last_line,
            message: format!("unexpected end of input, expected {what}"),
        })?;
        last_line = t.0;
        Ok(t)
    };
    fn parse<T: std::str::FromStr>((line, t): (usize, &str), what: &str) -> Result<T, SmallGameError> {
        t.parse().map_err(|_| SmallGameError::Syntax { line, message: format!("expected {what}, found `{t}`") })
    }
    let expect = |(line, t): (usize, &str), kw: &str| {
        if t == kw {
            Ok(())
        } else {
            Err(SmallGameError::Syntax { line, message: format!("expected `{kw}`, found `{t}`") })
        }
    };
    expect(next("`players`")?, "players")?;
    let n: usize = parse(next("player count")?, "player count")?;
    expect(next("`actions`")?, "actions")?;
    let sizes = (0..n).map(|_| parse::<usize>(next("action count")?, "action count")).collect::<Result<Vec<_>, _>>()?;
    let profiles: usize = sizes.iter().product();
    let mut payoffs = Vec::with_capacity(n);
    for p in 0..n {
        expect(next("`payoffs`")?, "payoffs")?;
        let tok = next("player index")?;
        let idx: usize = parse(tok, "player index")?;
        if idx != p {
            return Err(SmallGameError::Syntax { line: tok.0, message: format!("payoffs for player {p} expected next") });
        }
        payoffs.push((0..profiles).map(|_| parse::<f64>(next("payoff")?, "payoff")).collect::<Result<Vec<_>, _>>()?);
    }
    if let Ok((line, t)) = next("") {
        return Err(SmallGameError::Syntax { line, message: format!("trailing token `{t}`") });
    }
    Ok(MatrixGame::new(sizes, payoffs)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prisoners_dilemma_text() {
        // cooperate = 0, defect = 1
        let g = MatrixGame::new(vec![2, 2], vec![vec![3.0, 0.0, 5.0, 1.0], vec![3.0, 5.0, 0.0, 1.0]]).unwrap();
        let text = write_small_game(&g);
        assert_eq!(text, "players 2\nactions 2 2\npayoffs 0\n3 0\n5 1\npayoffs 1\n3 5\n0 1\n");
        assert_eq!(read_small_game(&text).unwrap(), g);
    }

    #[test]
    fn comments_and_layout_are_free() {
        let text = "# matching pennies\nplayers 2 actions 2 2\npayoffs 0 1 -1 -1 1\npayoffs 1\n-1 1\n1 -1 # done\n";
        let g = read_small_game(text).unwrap();
        assert_eq!(g.sizes(), &[2, 2]);
        assert_eq!(g.payoffs()[1], vec![-1.0, 1.0, 1.0, -1.0]);
    }

    #[test]
    fn errors_point_at_lines() {
        let err = read_small_game("players 1\nactions 2\npayoffs 0\n1 x\n").unwrap_err();
        assert!(matches!(err, SmallGameError::Syntax { line: 4, .. }));
        assert!(read_small_game("players 1\nactions 2\npayoffs 0\n1\n").is_err());
        assert!(read_small_game("players 1\nactions 1\npayoffs 0\n1 2\n").is_err());
    }
}
