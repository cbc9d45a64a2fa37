//! Visual sentences, the manipulation-action grammar, and action trees.
//!
//! Recognized segments are flattened into *visual sentences* — ordered
//! terminal sequences rooted at the hand that drives the action — and
//! parsed with a small context-free grammar into *action trees*:
//!
//! ```text
//! HP → H O | HP AP | HP CP      hand phrase
//! AP → A O | A OP | A HP        action phrase
//! CP → C HP                     collaboration phrase
//! OP → O O | O OP               object chain
//! ```
//!
//! The grammar is ambiguous; parsing canonicalizes by right-nesting
//! object chains and attaching action/collaboration phrases at the
//! outermost hand phrase, which makes trees comparable across videos.
//! Trees serialize as bracketed s-expressions and reverse-parse into
//! execution directives for planning.

use crate::error::{Error, Result};
use crate::ingest::HandKey;
use crate::recognize::{ActionLabel, RecognizedSegment};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, Write as IoWrite};
use std::path::Path;

/// The four terminal categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TerminalKind {
    /// A hand, e.g. `LH_P1`.
    H,
    /// An object label, e.g. `lemon`.
    O,
    /// An individual action or `transfer`.
    A,
    /// A collaboration: `handover` or `holding`.
    C,
}

impl TerminalKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TerminalKind::H => "H",
            TerminalKind::O => "O",
            TerminalKind::A => "A",
            TerminalKind::C => "C",
        }
    }
}

/// One terminal of a visual sentence.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "word")]
pub enum Terminal {
    H(HandKey),
    O(String),
    A(ActionLabel),
    C(ActionLabel),
}

impl Terminal {
    pub fn hand(hand: HandKey) -> Terminal {
        Terminal::H(hand)
    }

    pub fn object(label: impl Into<String>) -> Terminal {
        Terminal::O(label.into())
    }

    /// An action terminal; the label must be an individual action or
    /// `transfer`.
    pub fn action(label: ActionLabel) -> Result<Terminal> {
        if label.is_individual() || label == ActionLabel::Transfer {
            Ok(Terminal::A(label))
        } else {
            Err(Error::InvalidInput(format!(
                "{label} is not an action terminal"
            )))
        }
    }

    /// A collaboration terminal; the label must be `handover` or
    /// `holding`.
    pub fn collab(label: ActionLabel) -> Result<Terminal> {
        if matches!(label, ActionLabel::Handover | ActionLabel::Holding) {
            Ok(Terminal::C(label))
        } else {
            Err(Error::InvalidInput(format!(
                "{label} is not a collaboration terminal"
            )))
        }
    }

    pub fn kind(&self) -> TerminalKind {
        match self {
            Terminal::H(_) => TerminalKind::H,
            Terminal::O(_) => TerminalKind::O,
            Terminal::A(_) => TerminalKind::A,
            Terminal::C(_) => TerminalKind::C,
        }
    }

    pub fn word(&self) -> String {
        match self {
            Terminal::H(hand) => hand.to_string(),
            Terminal::O(label) => label.clone(),
            Terminal::A(action) | Terminal::C(action) => action.to_string(),
        }
    }
}

impl fmt::Display for Terminal {
    /// The leaf s-expression, e.g. `(H LH_P1)`.
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        write!(f, "({} {})", self.kind().as_str(), self.word())
    }
}

/// Internal node labels of an action tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PhraseLabel {
    HP,
    AP,
    CP,
    OP,
}

impl PhraseLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            PhraseLabel::HP => "HP",
            PhraseLabel::AP => "AP",
            PhraseLabel::CP => "CP",
            PhraseLabel::OP => "OP",
        }
    }
}

/// A parse tree over the manipulation grammar.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum ActionTree {
    Leaf(Terminal),
    Phrase(PhraseLabel, Vec<ActionTree>),
}

impl ActionTree {
    fn phrase(label: PhraseLabel, left: ActionTree, right: ActionTree) -> ActionTree {
        ActionTree::Phrase(label, vec![left, right])
    }

    /// Check that every internal node matches exactly one production.
    pub fn validate(&self) -> Result<()> {
        use ActionTree::{Leaf, Phrase};
        use PhraseLabel::*;
        use TerminalKind as K;
        let kind_of = |t: &ActionTree| match t {
            Leaf(term) => Some(term.kind()),
            Phrase(..) => None,
        };
        let label_of = |t: &ActionTree| match t {
            Leaf(_) => None,
            Phrase(label, _) => Some(*label),
        };
        match self {
            Leaf(_) => Ok(()),
            Phrase(label, children) => {
                let [left, right] = children.as_slice() else {
                    return Err(Error::InvalidInput(format!(
                        "{} node with {} children",
                        label.as_str(),
                        children.len()
                    )));
                };
                let shape = (kind_of(left), label_of(left), kind_of(right), label_of(right));
                let ok = match label {
                    HP => matches!(
                        shape,
                        (Some(K::H), _, Some(K::O), _)
                            | (_, Some(HP), _, Some(AP))
                            | (_, Some(HP), _, Some(CP))
                    ),
                    AP => matches!(
                        shape,
                        (Some(K::A), _, Some(K::O), _)
                            | (Some(K::A), _, _, Some(OP))
                            | (Some(K::A), _, _, Some(HP))
                    ),
                    CP => matches!(shape, (Some(K::C), _, _, Some(HP))),
                    OP => matches!(
                        shape,
                        (Some(K::O), _, Some(K::O), _) | (Some(K::O), _, _, Some(OP))
                    ),
                };
                if !ok {
                    return Err(Error::InvalidInput(format!(
                        "no production matches {} node",
                        label.as_str()
                    )));
                }
                left.validate()?;
                right.validate()
            }
        }
    }

    /// Left-to-right leaf yield.
    pub fn terminals(&self) -> Vec<Terminal> {
        let mut out = Vec::new();
        self.collect_terminals(&mut out);
        out
    }

    fn collect_terminals(&self, out: &mut Vec<Terminal>) {
        match self {
            ActionTree::Leaf(term) => out.push(term.clone()),
            ActionTree::Phrase(_, children) => {
                for child in children {
                    child.collect_terminals(out);
                }
            }
        }
    }

    /// Bracketed s-expression, e.g.
    /// `(HP (H RH_P1) (O knife))`.
    pub fn to_sexpr(&self) -> String {
        match self {
            ActionTree::Leaf(term) => term.to_string(),
            ActionTree::Phrase(label, children) => {
                let mut out = format!("({}", label.as_str());
                for child in children {
                    out.push(' ');
                    out.push_str(&child.to_sexpr());
                }
                out.push(')');
                out
            }
        }
    }

    /// Parse a bracketed s-expression and validate its productions.
    pub fn from_sexpr(text: &str) -> Result<ActionTree> {
        let tokens = tokenize(text)?;
        let mut pos = 0;
        let tree = parse_sexpr(&tokens, &mut pos)?;
        if pos != tokens.len() {
            return Err(Error::InvalidInput(format!(
                "trailing content after tree: {:?}",
                tokens[pos]
            )));
        }
        tree.validate()?;
        Ok(tree)
    }
}

#[derive(Debug, PartialEq)]
enum Token {
    Open,
    Close,
    Atom(String),
}

fn tokenize(text: &str) -> Result<Vec<Token>> {
    let mut tokens = Vec::new();
    let mut atom = String::new();
    for c in text.chars() {
        match c {
            '(' | ')' => {
                if !atom.is_empty() {
                    tokens.push(Token::Atom(std::mem::take(&mut atom)));
                }
                tokens.push(if c == '(' { Token::Open } else { Token::Close });
            }
            c if c.is_whitespace() => {
                if !atom.is_empty() {
                    tokens.push(Token::Atom(std::mem::take(&mut atom)));
                }
            }
            c => atom.push(c),
        }
    }
    if !atom.is_empty() {
        tokens.push(Token::Atom(atom));
    }
    if tokens.is_empty() {
        return Err(Error::InvalidInput("empty tree expression".into()));
    }
    Ok(tokens)
}

fn parse_sexpr(tokens: &[Token], pos: &mut usize) -> Result<ActionTree> {
    let bad = |msg: &str| Error::InvalidInput(format!("malformed tree expression: {msg}"));
    if tokens.get(*pos) != Some(&Token::Open) {
        return Err(bad("expected '('"));
    }
    *pos += 1;
    let Some(Token::Atom(head)) = tokens.get(*pos) else {
        return Err(bad("expected a node label"));
    };
    *pos += 1;
    match head.as_str() {
        "H" | "O" | "A" | "C" => {
            let Some(Token::Atom(word)) = tokens.get(*pos) else {
                return Err(bad("expected a terminal word"));
            };
            *pos += 1;
            if tokens.get(*pos) != Some(&Token::Close) {
                return Err(bad("expected ')' after terminal"));
            }
            *pos += 1;
            let terminal = match head.as_str() {
                "H" => Terminal::H(word.parse()?),
                "O" => Terminal::O(word.clone()),
                "A" => Terminal::action(word.parse()?)?,
                _ => Terminal::collab(word.parse()?)?,
            };
            Ok(ActionTree::Leaf(terminal))
        }
        "HP" | "AP" | "CP" | "OP" => {
            let label = match head.as_str() {
                "HP" => PhraseLabel::HP,
                "AP" => PhraseLabel::AP,
                "CP" => PhraseLabel::CP,
                _ => PhraseLabel::OP,
            };
            let mut children = Vec::new();
            while tokens.get(*pos) != Some(&Token::Close) {
                if *pos >= tokens.len() {
                    return Err(bad("unbalanced parentheses"));
                }
                children.push(parse_sexpr(tokens, pos)?);
            }
            *pos += 1;
            Ok(ActionTree::Phrase(label, children))
        }
        other => Err(bad(&format!("unknown node label {other:?}"))),
    }
}

/// An ordered terminal sequence built from one hand's activity in one
/// segment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisualSentence {
    pub terminals: Vec<Terminal>,
    /// Segment the sentence was built from.
    pub segment: usize,
    /// Hand that roots the sentence.
    pub hand: HandKey,
}

impl VisualSentence {
    pub fn words(&self) -> Vec<String> {
        self.terminals.iter().map(Terminal::word).collect()
    }
}

/// Build the visual sentence for one hand in a recognized segment.
///
/// Collaborations take precedence: the primary participant (giver,
/// first holder, or tool actor) carries the whole event in one
/// sentence, and the partner's own grasp builds nothing. Otherwise the
/// sentence follows the hand's recognized action:
/// grasp-only `[H, O]`; single target `[H, O, A, O]`; target inside a
/// container `[H, O, A, O, O]`; transfer
/// `[H, O, transfer, O, O, O]` (ingredient, source, destination).
/// Returns `None` when the hand grasped nothing or its activity is
/// subsumed by a partner's sentence.
pub fn build_sentence(seg: &RecognizedSegment, hand: &HandKey) -> Option<VisualSentence> {
    let mut terminals = vec![Terminal::hand(hand.clone())];

    // Handover/holding events are emitted from the first participant,
    // who may have already let go by the event's segment and so need
    // not hold anything in it.
    let event = seg
        .collaborations
        .iter()
        .filter(|e| matches!(e.label, ActionLabel::Handover | ActionLabel::Holding))
        .find(|e| &e.giver_or_holder == hand);
    if let Some(event) = event {
        terminals.push(Terminal::object(&event.object.label));
        terminals.push(Terminal::collab(event.label).ok()?);
        terminals.push(Terminal::hand(event.receiver_or_actor.clone()));
        terminals.push(Terminal::object(&event.object.label));
        return Some(VisualSentence {
            terminals,
            segment: seg.segment,
            hand: hand.clone(),
        });
    }
    let summary = seg.hands.iter().find(|h| &h.hand == hand)?;
    if summary.suppressed {
        return None;
    }

    terminals.push(Terminal::object(&summary.grasped.label));
    if let Some(action) = summary.action {
        terminals.push(Terminal::action(action).ok()?);
        if let Some((holder, held)) = &summary.assisted_by {
            // The worked object is in the partner's hand: embed them.
            terminals.push(Terminal::hand(holder.clone()));
            terminals.push(Terminal::object(&held.label));
        } else {
            for target in &summary.targets {
                terminals.push(Terminal::object(&target.label));
            }
        }
    }
    Some(VisualSentence {
        terminals,
        segment: seg.segment,
        hand: hand.clone(),
    })
}

/// All sentences a segment produces, in hand order. Event givers who no
/// longer hold anything in the segment are visited after the grasping
/// hands, so a handover still yields its sentence.
pub fn segment_sentences(seg: &RecognizedSegment) -> Vec<VisualSentence> {
    let mut hands: Vec<HandKey> = seg.hands.iter().map(|h| h.hand.clone()).collect();
    for event in &seg.collaborations {
        if matches!(event.label, ActionLabel::Handover | ActionLabel::Holding)
            && !hands.contains(&event.giver_or_holder)
        {
            hands.push(event.giver_or_holder.clone());
        }
    }
    hands
        .iter()
        .filter_map(|hand| build_sentence(seg, hand))
        .collect()
}

// The grammar as binary rules over terminals (`Sym::T`) and
// nonterminals (`Sym::N`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Nt {
    Hp,
    Ap,
    Cp,
    Op,
}

impl Nt {
    fn label(self) -> PhraseLabel {
        match self {
            Nt::Hp => PhraseLabel::HP,
            Nt::Ap => PhraseLabel::AP,
            Nt::Cp => PhraseLabel::CP,
            Nt::Op => PhraseLabel::OP,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Sym {
    T(TerminalKind),
    N(Nt),
}

const RULES: [(Nt, Sym, Sym); 9] = [
    (Nt::Hp, Sym::T(TerminalKind::H), Sym::T(TerminalKind::O)),
    (Nt::Hp, Sym::N(Nt::Hp), Sym::N(Nt::Ap)),
    (Nt::Hp, Sym::N(Nt::Hp), Sym::N(Nt::Cp)),
    (Nt::Ap, Sym::T(TerminalKind::A), Sym::T(TerminalKind::O)),
    (Nt::Ap, Sym::T(TerminalKind::A), Sym::N(Nt::Op)),
    (Nt::Ap, Sym::T(TerminalKind::A), Sym::N(Nt::Hp)),
    (Nt::Cp, Sym::T(TerminalKind::C), Sym::N(Nt::Hp)),
    (Nt::Op, Sym::T(TerminalKind::O), Sym::T(TerminalKind::O)),
    (Nt::Op, Sym::T(TerminalKind::O), Sym::N(Nt::Op)),
];

type Memo = BTreeMap<(Nt, usize, usize), Option<ActionTree>>;

/// Canonical derivation of `ts[i..j]` as `nt`, if one exists.
///
/// Splits are tried right-to-left, so the rightmost viable split wins
/// at every node: action/collaboration phrases attach to the outermost
/// hand phrase, and object chains nest to the right (the grammar forces
/// the latter — `OP` only recurses on its second symbol).
fn derive(nt: Nt, ts: &[Terminal], i: usize, j: usize, memo: &mut Memo) -> Option<ActionTree> {
    if let Some(hit) = memo.get(&(nt, i, j)) {
        return hit.clone();
    }
    let mut found = None;
    'outer: for k in (i + 1..j).rev() {
        for (lhs, left, right) in RULES.iter().filter(|r| r.0 == nt) {
            let left_tree = match left {
                Sym::T(kind) if k == i + 1 && ts[i].kind() == *kind => {
                    ActionTree::Leaf(ts[i].clone())
                }
                Sym::T(_) => continue,
                Sym::N(n) => match derive(*n, ts, i, k, memo) {
                    Some(t) => t,
                    None => continue,
                },
            };
            let right_tree = match right {
                Sym::T(kind) if k + 1 == j && ts[k].kind() == *kind => {
                    ActionTree::Leaf(ts[k].clone())
                }
                Sym::T(_) => continue,
                Sym::N(n) => match derive(*n, ts, k, j, memo) {
                    Some(t) => t,
                    None => continue,
                },
            };
            found = Some(ActionTree::phrase(lhs.label(), left_tree, right_tree));
            break 'outer;
        }
    }
    memo.insert((nt, i, j), found.clone());
    found
}

/// Scan the sentence with chart items to find the first terminal at
/// which every partial derivation dies; `None` means every prefix was
/// viable (the sentence merely ended too early).
fn first_dead_position(ts: &[Terminal]) -> Option<usize> {
    type Item = (usize, u8, usize); // (rule, dot, origin)
    let next_sym = |item: &Item| -> Option<Sym> {
        let (rule, dot, _) = *item;
        match dot {
            0 => Some(RULES[rule].1),
            1 => Some(RULES[rule].2),
            _ => None,
        }
    };
    let closure = |set: &mut std::collections::BTreeSet<Item>,
                   older: &mut Vec<std::collections::BTreeSet<Item>>,
                   at: usize| {
        loop {
            let mut added = Vec::new();
            for item in set.iter() {
                match next_sym(item) {
                    Some(Sym::N(nt)) => {
                        for (idx, rule) in RULES.iter().enumerate() {
                            if rule.0 == nt {
                                added.push((idx, 0, at));
                            }
                        }
                    }
                    None => {
                        let (rule, _, origin) = *item;
                        let lhs = RULES[rule].0;
                        let source = if origin == at { set.clone() } else { older[origin].clone() };
                        for parent in source {
                            if next_sym(&parent) == Some(Sym::N(lhs)) {
                                added.push((parent.0, parent.1 + 1, parent.2));
                            }
                        }
                    }
                    Some(Sym::T(_)) => {}
                }
            }
            let before = set.len();
            set.extend(added);
            if set.len() == before {
                break;
            }
        }
    };

    let mut states: Vec<std::collections::BTreeSet<Item>> = Vec::new();
    let mut start: std::collections::BTreeSet<Item> = RULES
        .iter()
        .enumerate()
        .filter(|(_, r)| r.0 == Nt::Hp)
        .map(|(idx, _)| (idx, 0, 0))
        .collect();
    closure(&mut start, &mut states, 0);
    states.push(start);

    for (i, terminal) in ts.iter().enumerate() {
        let mut next: std::collections::BTreeSet<Item> = states[i]
            .iter()
            .filter(|item| next_sym(item) == Some(Sym::T(terminal.kind())))
            .map(|&(rule, dot, origin)| (rule, dot + 1, origin))
            .collect();
        if next.is_empty() {
            return Some(i);
        }
        closure(&mut next, &mut states, i + 1);
        states.push(next);
    }
    None
}

/// Parse a terminal sequence into its canonical action tree.
///
/// Among the grammar's derivations the canonical one right-nests object
/// chains and attaches action/collaboration phrases at the outermost
/// hand phrase. An underivable sentence is rejected naming the first
/// terminal at which every parse dies (or position one past the end
/// when the sentence is a viable prefix that stopped short).
pub fn parse_terminals(ts: &[Terminal]) -> Result<ActionTree> {
    if ts.is_empty() {
        return Err(Error::InvalidInput("empty sentence".into()));
    }
    let mut memo = Memo::new();
    if let Some(tree) = derive(Nt::Hp, ts, 0, ts.len(), &mut memo) {
        debug_assert!(tree.validate().is_ok());
        return Ok(tree);
    }
    match first_dead_position(ts) {
        Some(position) => Err(Error::ParseRejected {
            position,
            terminal: ts[position].word(),
        }),
        None => Err(Error::ParseRejected {
            position: ts.len(),
            terminal: "<end of sentence>".into(),
        }),
    }
}

/// Parse a visual sentence into its canonical action tree.
pub fn parse(sentence: &VisualSentence) -> Result<ActionTree> {
    parse_terminals(&sentence.terminals)
}

/// Reverse a tree to its terminal yield; `parse_terminals` of the
/// result reproduces the tree for canonical trees.
pub fn unparse(tree: &ActionTree) -> Vec<Terminal> {
    tree.terminals()
}

/// A participant's role in a collaborative directive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    /// Hands the object over.
    Giver,
    /// Takes the object.
    Receiver,
    /// Keeps the object steady.
    Holder,
    /// Works the held object with a tool.
    Actor,
}

/// Collaboration metadata on a directive; paired directives share an
/// event id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Collaboration {
    pub role: Role,
    pub partner: HandKey,
    pub object: String,
    pub event: u64,
}

/// One agent-level instruction extracted from a tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionDirective {
    pub agent: HandKey,
    /// Label of the object the agent holds.
    pub grasp: String,
    /// `None` for a bare grasp.
    pub action: Option<ActionLabel>,
    /// Ordered object labels the action works on; for transfer:
    /// ingredient, source, destination.
    pub targets: Vec<String>,
    pub collab: Option<Collaboration>,
}

/// Destructure the outermost hand phrase into its base grasp and the
/// attached action/collaboration phrase, if any.
fn split_root(tree: &ActionTree) -> Result<(HandKey, String, Option<&ActionTree>)> {
    let malformed = |msg: &str| Error::InvalidInput(format!("malformed action tree: {msg}"));
    let base = |tree: &ActionTree| -> Result<(HandKey, String)> {
        if let ActionTree::Phrase(PhraseLabel::HP, children) = tree {
            if let [ActionTree::Leaf(Terminal::H(hand)), ActionTree::Leaf(Terminal::O(obj))] =
                children.as_slice()
            {
                return Ok((hand.clone(), obj.clone()));
            }
        }
        Err(malformed("expected a bare hand phrase"))
    };
    let ActionTree::Phrase(PhraseLabel::HP, children) = tree else {
        return Err(malformed("root is not a hand phrase"));
    };
    match children.as_slice() {
        [ActionTree::Leaf(Terminal::H(hand)), ActionTree::Leaf(Terminal::O(obj))] => {
            Ok((hand.clone(), obj.clone(), None))
        }
        [inner, attachment] => {
            let (hand, obj) = base(inner)?;
            Ok((hand, obj, Some(attachment)))
        }
        _ => Err(malformed("hand phrase is not binary")),
    }
}

fn flatten_op(tree: &ActionTree) -> Result<Vec<String>> {
    match tree {
        ActionTree::Leaf(Terminal::O(obj)) => Ok(vec![obj.clone()]),
        ActionTree::Phrase(PhraseLabel::OP, children) => {
            let mut out = Vec::new();
            for child in children {
                out.extend(flatten_op(child)?);
            }
            Ok(out)
        }
        _ => Err(Error::InvalidInput(
            "malformed action tree: expected an object chain".into(),
        )),
    }
}

/// Reverse-parse a canonical tree into execution directives.
///
/// Individual trees yield one directive; collaborative trees yield one
/// per participant, both stamped with `event_id` so a scheduler can
/// pair them. Targets are flattened in order (for transfer: ingredient,
/// source, destination).
pub fn tree_to_directives(tree: &ActionTree, event_id: u64) -> Result<Vec<ActionDirective>> {
    tree.validate()?;
    let malformed = |msg: &str| Error::InvalidInput(format!("malformed action tree: {msg}"));
    let (agent, grasp, attachment) = split_root(tree)?;
    let Some(attachment) = attachment else {
        return Ok(vec![ActionDirective {
            agent,
            grasp,
            action: None,
            targets: vec![],
            collab: None,
        }]);
    };
    match attachment {
        ActionTree::Phrase(PhraseLabel::AP, children) => {
            let [ActionTree::Leaf(Terminal::A(action)), rhs] = children.as_slice() else {
                return Err(malformed("bad action phrase"));
            };
            match rhs {
                ActionTree::Leaf(Terminal::O(_)) | ActionTree::Phrase(PhraseLabel::OP, _) => {
                    Ok(vec![ActionDirective {
                        agent,
                        grasp,
                        action: Some(*action),
                        targets: flatten_op(rhs)?,
                        collab: None,
                    }])
                }
                ActionTree::Phrase(PhraseLabel::HP, _) => {
                    // Tool action on an object in the partner's hand.
                    let (holder, held, nested) = split_root(rhs)?;
                    if nested.is_some() {
                        return Err(malformed("partner phrase must be a bare grasp"));
                    }
                    Ok(vec![
                        ActionDirective {
                            agent: agent.clone(),
                            grasp,
                            action: Some(*action),
                            targets: vec![held.clone()],
                            collab: Some(Collaboration {
                                role: Role::Actor,
                                partner: holder.clone(),
                                object: held.clone(),
                                event: event_id,
                            }),
                        },
                        ActionDirective {
                            agent: holder,
                            grasp: held.clone(),
                            action: None,
                            targets: vec![],
                            collab: Some(Collaboration {
                                role: Role::Holder,
                                partner: agent,
                                object: held,
                                event: event_id,
                            }),
                        },
                    ])
                }
                _ => Err(malformed("bad action phrase")),
            }
        }
        ActionTree::Phrase(PhraseLabel::CP, children) => {
            let [ActionTree::Leaf(Terminal::C(collab)), partner_phrase] = children.as_slice()
            else {
                return Err(malformed("bad collaboration phrase"));
            };
            let (partner, partner_obj, nested) = split_root(partner_phrase)?;
            if nested.is_some() {
                return Err(malformed("partner phrase must be a bare grasp"));
            }
            let (first_role, second_role) = match collab {
                ActionLabel::Handover => (Role::Giver, Role::Receiver),
                _ => (Role::Holder, Role::Holder),
            };
            Ok(vec![
                ActionDirective {
                    agent: agent.clone(),
                    grasp: grasp.clone(),
                    action: Some(*collab),
                    targets: vec![],
                    collab: Some(Collaboration {
                        role: first_role,
                        partner: partner.clone(),
                        object: grasp.clone(),
                        event: event_id,
                    }),
                },
                ActionDirective {
                    agent: partner,
                    grasp: partner_obj,
                    action: Some(*collab),
                    targets: vec![],
                    collab: Some(Collaboration {
                        role: second_role,
                        partner: agent,
                        object: grasp,
                        event: event_id,
                    }),
                },
            ])
        }
        _ => Err(malformed("attachment is neither action nor collaboration")),
    }
}

/// One parsed tree with the hand and span that produced it, as stored
/// in a trees file.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeRecord {
    pub hand: HandKey,
    pub start_frame: u64,
    pub end_frame: u64,
    /// Instance id of the grasped object, when known; lets downstream
    /// consumers tell whether two segments continue one grasp.
    pub grasp_id: Option<String>,
    pub tree: ActionTree,
}

/// Build and parse every sentence of every segment.
pub fn trees_from_segments(segments: &[RecognizedSegment]) -> Result<Vec<TreeRecord>> {
    let mut records = Vec::new();
    for seg in segments {
        for sentence in segment_sentences(seg) {
            let tree = parse(&sentence)?;
            // A collaboration sentence's instance is the event object
            // (the giver may hold nothing in the event's segment).
            let grasp_id = seg
                .collaborations
                .iter()
                .filter(|e| matches!(e.label, ActionLabel::Handover | ActionLabel::Holding))
                .find(|e| e.giver_or_holder == sentence.hand)
                .map(|e| e.object.id.clone())
                .or_else(|| {
                    seg.hands
                        .iter()
                        .find(|h| h.hand == sentence.hand)
                        .map(|h| h.grasped.id.clone())
                });
            records.push(TreeRecord {
                hand: sentence.hand,
                start_frame: seg.start_frame,
                end_frame: seg.end_frame,
                grasp_id,
                tree,
            });
        }
    }
    Ok(records)
}

/// Write tree records, one per line:
/// `<hand> <start> <end> [grasp=<id>] <s-expression>`.
pub fn save_trees(records: &[TreeRecord], path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    let mut w = std::io::BufWriter::new(file);
    for record in records {
        write!(w, "{} {} {} ", record.hand, record.start_frame, record.end_frame)?;
        if let Some(grasp) = &record.grasp_id {
            write!(w, "grasp={grasp} ")?;
        }
        writeln!(w, "{}", record.tree.to_sexpr())?;
    }
    Ok(())
}

/// Read tree records written by [`save_trees`].
pub fn load_trees(path: impl AsRef<Path>) -> Result<Vec<TreeRecord>> {
    let file = std::fs::File::open(path.as_ref())?;
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: String| Error::InvalidInput(format!("trees line {}: {msg}", idx + 1));
        let mut parts = line.splitn(4, ' ');
        let (Some(hand), Some(start), Some(end), Some(rest)) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(bad("expected '<hand> <start> <end> <tree>'".into()));
        };
        let hand: HandKey = hand.parse().map_err(|e| bad(format!("{e}")))?;
        let start_frame: u64 = start.parse().map_err(|e| bad(format!("bad start frame: {e}")))?;
        let end_frame: u64 = end.parse().map_err(|e| bad(format!("bad end frame: {e}")))?;
        if end_frame <= start_frame {
            return Err(bad(format!("empty span {start_frame}..{end_frame}")));
        }
        let (grasp_id, sexpr) = match rest.strip_prefix("grasp=") {
            Some(tail) => {
                let (id, tree) = tail
                    .split_once(' ')
                    .ok_or_else(|| bad("missing tree after grasp id".into()))?;
                (Some(id.to_string()), tree)
            }
            None => (None, rest),
        };
        let tree = ActionTree::from_sexpr(sexpr).map_err(|e| bad(format!("{e}")))?;
        if !matches!(tree, ActionTree::Phrase(PhraseLabel::HP, _)) {
            return Err(bad("tree is not rooted at a hand phrase".into()));
        }
        records.push(TreeRecord {
            hand,
            start_frame,
            end_frame,
            grasp_id,
            tree,
        });
    }
    Ok(records)
}

/// Render a tree as a graph description (`dot` digraph).
pub fn tree_to_dot(tree: &ActionTree, name: &str) -> String {
    fn visit(tree: &ActionTree, next_id: &mut usize, out: &mut String) -> usize {
        let id = *next_id;
        *next_id += 1;
        match tree {
            ActionTree::Leaf(term) => {
                out.push_str(&format!(
                    "  n{id} [label=\"{} {}\" shape=box];\n",
                    term.kind().as_str(),
                    term.word()
                ));
            }
            ActionTree::Phrase(label, children) => {
                out.push_str(&format!("  n{id} [label=\"{}\"];\n", label.as_str()));
                for child in children {
                    let child_id = visit(child, next_id, out);
                    out.push_str(&format!("  n{id} -> n{child_id};\n"));
                }
            }
        }
        id
    }
    let mut out = format!("digraph {name} {{\n  node [fontname=\"sans-serif\"];\n");
    let mut next_id = 0;
    visit(tree, &mut next_id, &mut out);
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::associate::FrameRuns;
    use crate::recognize::{CollabEvent, HandSummary, ObjRef};

    fn hand(s: &str) -> HandKey {
        s.parse().unwrap()
    }

    fn sentence(spec: &[(&str, &str)]) -> Vec<Terminal> {
        spec.iter()
            .map(|(kind, word)| match *kind {
                "H" => Terminal::hand(hand(word)),
                "O" => Terminal::object(*word),
                "A" => Terminal::action(word.parse().unwrap()).unwrap(),
                "C" => Terminal::collab(word.parse().unwrap()).unwrap(),
                other => panic!("bad kind {other}"),
            })
            .collect()
    }

    /// Every derivation of `ts[i..j]` as `nt`, with no canonical
    /// preference — the brute-force oracle the canonical parser is
    /// checked against.
    fn enumerate(nt: Nt, ts: &[Terminal], i: usize, j: usize) -> Vec<ActionTree> {
        let mut out = Vec::new();
        for (lhs, left, right) in RULES.iter().filter(|r| r.0 == nt) {
            for k in i + 1..j {
                let lefts = match left {
                    Sym::T(kind) if k == i + 1 && ts[i].kind() == *kind => {
                        vec![ActionTree::Leaf(ts[i].clone())]
                    }
                    Sym::T(_) => vec![],
                    Sym::N(n) => enumerate(*n, ts, i, k),
                };
                if lefts.is_empty() {
                    continue;
                }
                let rights = match right {
                    Sym::T(kind) if k + 1 == j && ts[k].kind() == *kind => {
                        vec![ActionTree::Leaf(ts[k].clone())]
                    }
                    Sym::T(_) => vec![],
                    Sym::N(n) => enumerate(*n, ts, k, j),
                };
                for l in &lefts {
                    for r in &rights {
                        out.push(ActionTree::phrase(lhs.label(), l.clone(), r.clone()));
                    }
                }
            }
        }
        out
    }

    fn all_parses(ts: &[Terminal]) -> Vec<ActionTree> {
        enumerate(Nt::Hp, ts, 0, ts.len())
    }

    #[test]
    fn bare_grasp_parses_to_base_phrase() {
        let ts = sentence(&[("H", "RH_P1"), ("O", "knife")]);
        let tree = parse_terminals(&ts).unwrap();
        assert_eq!(tree.to_sexpr(), "(HP (H RH_P1) (O knife))");
    }

    #[test]
    fn handover_sentence_has_exactly_one_derivation() {
        let ts = sentence(&[
            ("H", "LH_P1"),
            ("O", "lemon"),
            ("C", "handover"),
            ("H", "RH_P2"),
            ("O", "lemon"),
        ]);
        let parses = all_parses(&ts);
        assert_eq!(parses.len(), 1, "expected a unique derivation");
        let tree = parse_terminals(&ts).unwrap();
        assert_eq!(tree, parses[0]);
        assert_eq!(
            tree.to_sexpr(),
            "(HP (HP (H LH_P1) (O lemon)) (CP (C handover) (HP (H RH_P2) (O lemon))))"
        );
    }

    #[test]
    fn trailing_action_attaches_to_the_outermost_hand_phrase() {
        // H O C H O A O is ambiguous: the final action phrase could
        // modify the partner inside the collaboration or the whole
        // outer phrase. Canonical parsing picks the outer attachment.
        let ts = sentence(&[
            ("H", "LH_P1"),
            ("O", "pot"),
            ("C", "holding"),
            ("H", "RH_P2"),
            ("O", "pot"),
            ("A", "stir"),
            ("O", "onion"),
        ]);
        let parses = all_parses(&ts);
        assert!(parses.len() >= 2, "expected ambiguity, got {}", parses.len());
        let tree = parse_terminals(&ts).unwrap();
        assert!(parses.contains(&tree));
        assert_eq!(
            tree.to_sexpr(),
            "(HP (HP (HP (H LH_P1) (O pot)) (CP (C holding) (HP (H RH_P2) (O pot)))) \
             (AP (A stir) (O onion)))"
        );
    }

    #[test]
    fn object_chains_nest_to_the_right() {
        let ts = sentence(&[
            ("H", "RH_P1"),
            ("O", "chicken"),
            ("A", "transfer"),
            ("O", "chicken"),
            ("O", "board"),
            ("O", "pot"),
        ]);
        let tree = parse_terminals(&ts).unwrap();
        assert_eq!(
            tree.to_sexpr(),
            "(HP (HP (H RH_P1) (O chicken)) \
             (AP (A transfer) (OP (O chicken) (OP (O board) (O pot)))))"
        );
        // The oracle agrees there is exactly one derivation here.
        assert_eq!(all_parses(&ts).len(), 1);
    }

    #[test]
    fn action_initial_sentence_is_rejected_at_position_zero() {
        let ts = sentence(&[("A", "cut"), ("O", "knife")]);
        let err = parse_terminals(&ts).unwrap_err();
        match err {
            Error::ParseRejected { position, terminal } => {
                assert_eq!(position, 0);
                assert_eq!(terminal, "cut");
            }
            other => panic!("wrong error: {other}"),
        }
    }

    #[test]
    fn dead_middle_terminal_is_named() {
        // H O H … — a second hand can only follow an action or a
        // collaboration word.
        let ts = sentence(&[("H", "LH_P1"), ("O", "pot"), ("H", "RH_P2"), ("O", "pot")]);
        let err = parse_terminals(&ts).unwrap_err();
        match err {
            Error::ParseRejected { position, terminal } => {
                assert_eq!(position, 2);
                assert_eq!(terminal, "RH_P2");
            }
            other => panic!("wrong error: {other}"),
        }
    }

    #[test]
    fn truncated_sentence_is_rejected_past_the_end() {
        let ts = sentence(&[("H", "LH_P1"), ("O", "lemon"), ("C", "handover")]);
        let err = parse_terminals(&ts).unwrap_err();
        match err {
            Error::ParseRejected { position, terminal } => {
                assert_eq!(position, 3);
                assert_eq!(terminal, "<end of sentence>");
            }
            other => panic!("wrong error: {other}"),
        }
    }

    #[test]
    fn parse_then_unparse_restores_the_sentence() {
        let cases: Vec<Vec<Terminal>> = vec![
            sentence(&[("H", "LH_P1"), ("O", "lemon")]),
            sentence(&[("H", "RH_P2"), ("O", "knife"), ("A", "cut"), ("O", "onion")]),
            sentence(&[
                ("H", "RH_P1"),
                ("O", "spoon"),
                ("A", "stir"),
                ("O", "onion"),
                ("O", "pot"),
            ]),
            sentence(&[
                ("H", "RH_P1"),
                ("O", "chicken"),
                ("A", "transfer"),
                ("O", "chicken"),
                ("O", "board"),
                ("O", "pot"),
            ]),
            sentence(&[
                ("H", "LH_P1"),
                ("O", "lemon"),
                ("C", "handover"),
                ("H", "RH_P2"),
                ("O", "lemon"),
            ]),
            sentence(&[
                ("H", "RH_P2"),
                ("O", "knife"),
                ("A", "cut"),
                ("H", "LH_P1"),
                ("O", "board"),
            ]),
            sentence(&[
                ("H", "LH_P1"),
                ("O", "pot"),
                ("C", "holding"),
                ("H", "RH_P2"),
                ("O", "pot"),
            ]),
        ];
        for ts in cases {
            let tree = parse_terminals(&ts).unwrap();
            assert_eq!(unparse(&tree), ts);
            assert_eq!(parse_terminals(&unparse(&tree)).unwrap(), tree);
        }
    }

    #[test]
    fn sexpr_round_trips() {
        let text = "(HP (HP (H LH_P1) (O lemon)) (CP (C handover) (HP (H RH_P2) (O lemon))))";
        let tree = ActionTree::from_sexpr(text).unwrap();
        assert_eq!(tree.to_sexpr(), text);
    }

    #[test]
    fn malformed_sexprs_are_rejected() {
        for bad in [
            "",
            "(HP (H LH_P1)",                    // unbalanced
            "(HP (O knife) (O onion))",         // no such production
            "(HP (H LH_P1) (O knife)) trailing",
            "(XX (H LH_P1) (O knife))",         // unknown label
            "(HP (H LH_P1) (C cut))",           // cut is not a collaboration
            "(HP (H nonsense) (O knife))",      // unparseable hand
        ] {
            assert!(ActionTree::from_sexpr(bad).is_err(), "accepted {bad:?}");
        }
    }

    fn summary(hand_key: &str, grasped: (&str, &str)) -> HandSummary {
        HandSummary {
            hand: hand(hand_key),
            grasped: ObjRef {
                id: grasped.0.into(),
                label: grasped.1.into(),
            },
            action: None,
            score: None,
            targets: vec![],
            assisted_by: None,
            suppressed: false,
            grasp_support: FrameRuns::span(0, 90),
        }
    }

    fn segment(hands: Vec<HandSummary>, collaborations: Vec<CollabEvent>) -> RecognizedSegment {
        RecognizedSegment {
            segment: 0,
            start_frame: 0,
            end_frame: 90,
            fps: 30.0,
            hands,
            collaborations,
        }
    }

    #[test]
    fn sentences_follow_the_recognized_shape() {
        // Bare grasp.
        let seg = segment(vec![summary("LH_P1", ("lemon0", "lemon"))], vec![]);
        let s = build_sentence(&seg, &hand("LH_P1")).unwrap();
        assert_eq!(s.words(), ["LH_P1", "lemon"]);

        // Single target.
        let mut cut = summary("RH_P2", ("knife0", "knife"));
        cut.action = Some(ActionLabel::Cut);
        cut.targets = vec![ObjRef { id: "onion0".into(), label: "onion".into() }];
        let seg = segment(vec![cut.clone()], vec![]);
        let s = build_sentence(&seg, &hand("RH_P2")).unwrap();
        assert_eq!(s.words(), ["RH_P2", "knife", "cut", "onion"]);

        // Ingredient inside a container.
        let mut stir = summary("RH_P1", ("spoon0", "spoon"));
        stir.action = Some(ActionLabel::Stir);
        stir.targets = vec![
            ObjRef { id: "onion0".into(), label: "onion".into() },
            ObjRef { id: "pot0".into(), label: "pot".into() },
        ];
        let seg = segment(vec![stir], vec![]);
        let s = build_sentence(&seg, &hand("RH_P1")).unwrap();
        assert_eq!(s.words(), ["RH_P1", "spoon", "stir", "onion", "pot"]);

        // Transfer.
        let mut transfer = summary("RH_P1", ("chicken0", "chicken"));
        transfer.action = Some(ActionLabel::Transfer);
        transfer.targets = vec![
            ObjRef { id: "chicken0".into(), label: "chicken".into() },
            ObjRef { id: "board0".into(), label: "board".into() },
            ObjRef { id: "pot0".into(), label: "pot".into() },
        ];
        let seg = segment(vec![transfer], vec![]);
        let s = build_sentence(&seg, &hand("RH_P1")).unwrap();
        assert_eq!(s.words(), ["RH_P1", "chicken", "transfer", "chicken", "board", "pot"]);

        // Assisted action embeds the partner.
        cut.assisted_by = Some((
            hand("LH_P1"),
            ObjRef { id: "board0".into(), label: "board".into() },
        ));
        cut.targets = vec![ObjRef { id: "board0".into(), label: "board".into() }];
        let mut holder = summary("LH_P1", ("board0", "board"));
        holder.suppressed = true;
        let seg = segment(vec![cut, holder], vec![]);
        let s = build_sentence(&seg, &hand("RH_P2")).unwrap();
        assert_eq!(s.words(), ["RH_P2", "knife", "cut", "LH_P1", "board"]);
        assert!(build_sentence(&seg, &hand("LH_P1")).is_none());
    }

    #[test]
    fn collaborative_events_build_one_sentence_from_the_first_participant() {
        let mut giver = summary("LH_P1", ("lemon0", "lemon"));
        giver.suppressed = true;
        let mut receiver = summary("RH_P2", ("lemon0", "lemon"));
        receiver.suppressed = true;
        let event = CollabEvent {
            label: ActionLabel::Handover,
            object: ObjRef { id: "lemon0".into(), label: "lemon".into() },
            giver_or_holder: hand("LH_P1"),
            receiver_or_actor: hand("RH_P2"),
        };
        let seg = segment(vec![giver, receiver], vec![event]);
        let s = build_sentence(&seg, &hand("LH_P1")).unwrap();
        assert_eq!(s.words(), ["LH_P1", "lemon", "handover", "RH_P2", "lemon"]);
        assert!(build_sentence(&seg, &hand("RH_P2")).is_none());
        assert_eq!(segment_sentences(&seg).len(), 1);
    }

    #[test]
    fn a_giver_without_a_grasp_in_the_event_segment_still_speaks() {
        // The giver let go before the receiver's segment began, so only
        // the receiver has a summary where the event lands.
        let mut receiver = summary("RH_P2", ("lemon0", "lemon"));
        receiver.suppressed = true;
        let event = CollabEvent {
            label: ActionLabel::Handover,
            object: ObjRef { id: "lemon0".into(), label: "lemon".into() },
            giver_or_holder: hand("LH_P1"),
            receiver_or_actor: hand("RH_P2"),
        };
        let seg = segment(vec![receiver], vec![event]);
        let sentences = segment_sentences(&seg);
        assert_eq!(sentences.len(), 1);
        assert_eq!(
            sentences[0].words(),
            ["LH_P1", "lemon", "handover", "RH_P2", "lemon"]
        );
        let records = trees_from_segments(std::slice::from_ref(&seg)).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].hand, hand("LH_P1"));
        assert_eq!(records[0].grasp_id.as_deref(), Some("lemon0"));
    }

    #[test]
    fn transfer_tree_reverses_to_a_source_destination_directive() {
        let tree = ActionTree::from_sexpr(
            "(HP (HP (H RH_P1) (O chicken)) \
             (AP (A transfer) (OP (O chicken) (OP (O board) (O pot)))))",
        )
        .unwrap();
        let directives = tree_to_directives(&tree, 7).unwrap();
        assert_eq!(directives.len(), 1);
        let d = &directives[0];
        assert_eq!(d.agent, hand("RH_P1"));
        assert_eq!(d.action, Some(ActionLabel::Transfer));
        assert_eq!(d.targets, ["chicken", "board", "pot"]);
        assert!(d.collab.is_none());
    }

    #[test]
    fn handover_tree_reverses_to_a_paired_directive() {
        let tree = ActionTree::from_sexpr(
            "(HP (HP (H LH_P1) (O lemon)) (CP (C handover) (HP (H RH_P2) (O lemon))))",
        )
        .unwrap();
        let directives = tree_to_directives(&tree, 3).unwrap();
        assert_eq!(directives.len(), 2);
        let giver = &directives[0];
        let receiver = &directives[1];
        assert_eq!(giver.collab.as_ref().unwrap().role, Role::Giver);
        assert_eq!(receiver.collab.as_ref().unwrap().role, Role::Receiver);
        assert_eq!(giver.collab.as_ref().unwrap().event, 3);
        assert_eq!(receiver.collab.as_ref().unwrap().event, 3);
        assert_eq!(giver.collab.as_ref().unwrap().partner, receiver.agent);
        assert_eq!(receiver.collab.as_ref().unwrap().partner, giver.agent);
    }

    #[test]
    fn assisted_tree_reverses_to_actor_and_holder() {
        let tree = ActionTree::from_sexpr(
            "(HP (HP (H RH_P2) (O knife)) (AP (A cut) (HP (H LH_P1) (O board))))",
        )
        .unwrap();
        let directives = tree_to_directives(&tree, 0).unwrap();
        assert_eq!(directives.len(), 2);
        assert_eq!(directives[0].collab.as_ref().unwrap().role, Role::Actor);
        assert_eq!(directives[0].targets, ["board"]);
        assert_eq!(directives[1].collab.as_ref().unwrap().role, Role::Holder);
        assert_eq!(directives[1].grasp, "board");
        assert_eq!(directives[1].action, None);
    }

    #[test]
    fn grasp_only_tree_reverses_to_an_actionless_directive() {
        let tree = ActionTree::from_sexpr("(HP (H LH_P1) (O lemon))").unwrap();
        let directives = tree_to_directives(&tree, 0).unwrap();
        assert_eq!(directives.len(), 1);
        assert_eq!(directives[0].action, None);
        assert_eq!(directives[0].grasp, "lemon");
    }

    #[test]
    fn tree_files_round_trip() {
        let records = vec![
            TreeRecord {
                hand: hand("LH_P1"),
                start_frame: 0,
                end_frame: 90,
                grasp_id: Some("lemon0".into()),
                tree: ActionTree::from_sexpr(
                    "(HP (HP (H LH_P1) (O lemon)) (CP (C handover) (HP (H RH_P2) (O lemon))))",
                )
                .unwrap(),
            },
            TreeRecord {
                hand: hand("RH_P2"),
                start_frame: 90,
                end_frame: 240,
                grasp_id: None,
                tree: ActionTree::from_sexpr("(HP (H RH_P2) (O lemon))").unwrap(),
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trees.txt");
        save_trees(&records, &path).unwrap();
        assert_eq!(load_trees(&path).unwrap(), records);
    }

    #[test]
    fn dot_export_names_every_node() {
        let tree = ActionTree::from_sexpr("(HP (H LH_P1) (O lemon))").unwrap();
        let dot = tree_to_dot(&tree, "t0");
        assert!(dot.starts_with("digraph t0 {"));
        assert!(dot.contains("label=\"HP\""));
        assert!(dot.contains("label=\"H LH_P1\""));
        assert!(dot.contains("n0 -> n1;"));
        assert!(dot.trim_end().ends_with('}'));
    }
}
