from functools import lru_cache
from typing import Iterator, List, Optional

import tree_sitter_python
from tree_sitter import Language, Node, Parser, Tree


@lru_cache(maxsize=1)
def python_language() -> Language:
    return Language(tree_sitter_python.language())


def parse(source: str) -> Tree:
    # Parser objects are not shared between threads; building one is cheap
    parser = Parser(python_language())
    return parser.parse(source.encode("utf-8"))


def walk(node: Node) -> Iterator[Node]:
    stack: List[Node] = [node]
    while stack:
        current = stack.pop()
        yield current
        stack.extend(reversed(current.children))


def error_regions(tree: Tree) -> List[Node]:
    """Outermost ERROR nodes plus MISSING placeholders, in source order."""
    regions: List[Node] = []
    stack: List[Node] = [tree.root_node]
    while stack:
        node = stack.pop()
        if node.is_error or node.is_missing:
            regions.append(node)
            continue
        if node.has_error:
            stack.extend(reversed(node.children))
    return sorted(regions, key=lambda n: (n.start_byte, n.end_byte))


def count_syntax_errors(program: str) -> int:
    """0 when the program parses cleanly, else the number of error regions."""
    return len(error_regions(parse(program)))


def parses_cleanly(program: str, tree: Optional[Tree] = None) -> bool:
    tree = tree or parse(program)
    return not tree.root_node.has_error
