"""Token <-> id vocabularies with reserved SOS/UNK/EOS ids."""

import ast
from collections import Counter

from .autodiff import ContractError

SOS, UNK, EOS = 0, 1, 2
SPECIALS = ("<SOS>", "<UNK>", "<EOS>")
# attribute of internal (non-leaf) nodes; always id 3 of the attribute vocabulary
NO_ATTR = "<NONE>"


class Vocabulary:
    def __init__(self, tokens=()):
        self.tokens = list(SPECIALS)
        for tok in tokens:
            if tok in SPECIALS:
                raise ContractError(f"vocabulary token {tok!r} collides with a special")
            self.tokens.append(tok)
        self.index = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ContractError("vocabulary contains duplicate tokens")

    @classmethod
    def from_counts(cls, counts, cap=None):
        """Specials, then the ``cap`` most frequent tokens (ties broken lexicographically)."""
        ranked = sorted((t for t in counts if t not in SPECIALS), key=lambda t: (-counts[t], t))
        if cap is not None:
            ranked = ranked[:cap]
        return cls(ranked)

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def encode(self, token):
        return self.index.get(token, UNK)

    def decode(self, idx):
        return self.tokens[idx]

    def encode_all(self, tokens):
        return [self.encode(t) for t in tokens]

    def decode_all(self, ids):
        return [self.tokens[i] for i in ids]


def grammar_node_types():
    """Every node type :mod:`mlap2seq.ingest` can emit: AST class names and primitive field names."""
    names = set()
    for obj in vars(ast).values():
        if isinstance(obj, type) and issubclass(obj, ast.AST):
            names.add(obj.__name__)
            names.update(getattr(obj, "_fields", ()))
    return sorted(names)


def build_vocabularies(corpus, target_cap=5000, attr_cap=10000, depth_cap=20):
    """Build (target, attribute, node-type) vocabularies from training graphs.

    ``corpus`` yields :class:`~mlap2seq.ingest.SourceGraph` objects. Returns the
    three vocabularies and the depth cap (depths above it are clamped).
    """
    targets = Counter()
    attrs = Counter()
    n = 0
    for g in corpus:
        n += 1
        targets.update(g.target)
        attrs.update(node.attribute for node in g.nodes if node.attribute)
    if n == 0:
        raise ContractError("build_vocabularies: empty corpus")
    attr_tokens = Vocabulary.from_counts(attrs, attr_cap).tokens[len(SPECIALS) :]
    return (
        Vocabulary.from_counts(targets, target_cap),
        Vocabulary([NO_ATTR] + [t for t in attr_tokens if t != NO_ATTR]),
        Vocabulary(grammar_node_types()),
        depth_cap,
    )


def encode_target(subtokens, vocab, max_len):
    """Vocabulary ids truncated to ``max_len`` and right-padded with EOS."""
    if max_len < 1:
        raise ContractError("encode_target: max_len must be >= 1")
    ids = vocab.encode_all(subtokens[:max_len])
    return ids + [EOS] * (max_len - len(ids))
