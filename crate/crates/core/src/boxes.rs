//! Single PR-box semantics.
//!
//! A PR box has binary inputs `x, y` and binary outputs `a, b` with
//! `P(a, b | x, y) = 1/2` when `a ^ b == x & y` and zero otherwise. Networks
//! are simulated by letting whichever side is queried first draw a uniform bit
//! and forcing the other side with [`pr_determined_output`].

use crate::dyadic::Dyadic;

/// A binary digit. Inputs, outputs and settings are all bits.
pub type Bit = bool;

/// What one side of a box knows when it is queried.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BoxQuery {
    pub own_input: Bit,
    pub counterpart_input: Bit,
    /// `None` while the counterpart has not yet measured its half.
    pub counterpart_output: Option<Bit>,
}

impl BoxQuery {
    /// Output forced on this side, or `None` if this side is free to draw a
    /// uniform bit.
    pub fn forced_output(&self) -> Option<Bit> {
        self.counterpart_output
            .map(|b| pr_determined_output(b, self.own_input, self.counterpart_input))
    }
}

/// The output one side must produce once the other side's output is known.
pub fn pr_determined_output(counterpart_output: Bit, own_input: Bit, counterpart_input: Bit) -> Bit {
    counterpart_output ^ (own_input & counterpart_input)
}

/// `P(a, b | x, y)` for a single PR box.
pub fn pr_probability(a: Bit, b: Bit, x: Bit, y: Bit) -> Dyadic {
    if a ^ b == (x & y) {
        Dyadic::new(1, 1)
    } else {
        Dyadic::ZERO
    }
}

/// Decoded bit of each outcome branch of two perfectly correlated boxes.
///
/// Alice's halves of both boxes return the same uniformly random bit `r`.
/// She queries box 1, feeds `r ^ message` into box 2, and Bob queries his half
/// of box 2 with input 1. Box 2 still obeys the PR relation, so Bob reads
/// `r ^ (r ^ message) = message` on both branches.
pub fn signaling_demo_branches(message: Bit) -> [Bit; 2] {
    [false, true].map(|shared| {
        let alice_box1 = shared;
        let alice_box2 = shared;
        let alice_input2 = alice_box1 ^ message;
        let bob_input2 = true;
        pr_determined_output(alice_box2, bob_input2, alice_input2)
    })
}

/// Bob's decoded bit under the correlated-box distribution.
///
/// Both equally likely branches decode identically, so the message arrives
/// with probability one.
pub fn pathological_signaling_demo(message: Bit) -> Bit {
    let [first, second] = signaling_demo_branches(message);
    assert_eq!(first, second, "correlated branches decoded differently");
    first
}

/// Probability that the same protocol delivers `message` when the two boxes
/// are independent PR boxes, enumerating all four output branches.
pub fn independent_boxes_success(message: Bit) -> Dyadic {
    let mut hits = 0u64;
    for alice_box1 in [false, true] {
        for alice_box2 in [false, true] {
            let alice_input2 = alice_box1 ^ message;
            if pr_determined_output(alice_box2, true, alice_input2) == message {
                hits += 1;
            }
        }
    }
    Dyadic::new(hits, 2)
}
