//! Shared synthetic grammars for tests, the fixture generator, and the
//! offline examples in the README.

use crate::sampling::ToyGrammar;

/// A small newswire-flavored grammar; recursive enough to produce varied
/// structures but contractive so sampling terminates.
pub const SOURCE_GRAMMAR: &str = r#"
ROOT -> S
S -> NP VP : 10
S -> S CC S : 1
NP -> DT NN : 6
NP -> DT JJ NN : 3
NP -> NNP : 2
NP -> PRP : 2
NP -> NP PP : 2
VP -> VBZ NP : 5
VP -> VBZ : 2
VP -> VBZ PP : 2
VP -> MD VB NP : 2
VP -> VBZ SBAR : 1
SBAR -> IN S : 1
PP -> IN NP : 1
DT -> "the" : 5
DT -> "a" : 3
DT -> "every" : 1
JJ -> "old" : 2
JJ -> "quick" : 2
JJ -> "gray" : 1
JJ -> "small" : 1
NN -> "dog" : 4
NN -> "cat" : 3
NN -> "fox" : 2
NN -> "bone" : 2
NN -> "garden" : 2
NN -> "market" : 1
NN -> "report" : 1
NNP -> "Alice" : 2
NNP -> "Bob" : 2
NNP -> "Paris" : 1
PRP -> "it" : 2
PRP -> "she" : 2
PRP -> "he" : 1
VBZ -> "sees" : 3
VBZ -> "chases" : 2
VBZ -> "finds" : 2
VBZ -> "likes" : 2
VBZ -> "sleeps" : 1
MD -> "can" : 2
MD -> "will" : 1
VB -> "see" : 2
VB -> "chase" : 1
VB -> "find" : 1
IN -> "in" : 3
IN -> "near" : 2
IN -> "under" : 1
IN -> "that" : 1
CC -> "and" : 2
CC -> "or" : 1
"#;

/// A review-flavored shift of [`SOURCE_GRAMMAR`]: the clause skeleton is
/// shared, but adverbial structures and a large part of the vocabulary are
/// new, so roughly half of the sampled rule mass is disjoint from the
/// source.
pub const TARGET_GRAMMAR: &str = r#"
ROOT -> S
S -> NP VP : 10
S -> S CC S : 1
NP -> DT NN : 6
NP -> DT JJ NN : 3
NP -> NNP : 2
NP -> PRP : 2
NP -> NP PP : 2
VP -> VBZ NP : 5
VP -> VBZ : 2
VP -> VBZ PP : 2
VP -> VBZ ADVP : 3
VP -> VBZ NP ADVP : 2
ADVP -> RB : 2
ADVP -> RB RB : 1
PP -> IN NP : 1
DT -> "the" : 5
DT -> "this" : 3
DT -> "that" : 1
JJ -> "cheap" : 2
JJ -> "sturdy" : 2
JJ -> "broken" : 1
JJ -> "great" : 1
NN -> "product" : 4
NN -> "battery" : 3
NN -> "screen" : 2
NN -> "seller" : 2
NN -> "price" : 2
NN -> "refund" : 1
NN -> "dog" : 1
NNP -> "Amazon" : 2
NNP -> "Alice" : 1
PRP -> "it" : 3
PRP -> "I" : 2
VBZ -> "works" : 3
VBZ -> "breaks" : 2
VBZ -> "arrives" : 2
VBZ -> "likes" : 1
VBZ -> "ships" : 1
RB -> "quickly" : 2
RB -> "well" : 2
RB -> "cheaply" : 1
IN -> "in" : 2
IN -> "with" : 2
IN -> "near" : 1
CC -> "and" : 2
CC -> "but" : 1
"#;

pub fn source_grammar() -> ToyGrammar {
    ToyGrammar::parse_text(SOURCE_GRAMMAR).expect("source grammar parses")
}

pub fn target_grammar() -> ToyGrammar {
    ToyGrammar::parse_text(TARGET_GRAMMAR).expect("target grammar parses")
}
