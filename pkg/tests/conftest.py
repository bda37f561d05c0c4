import pytest

from lrc.corpus import Lexicon, PhonemeAlphabet


@pytest.fixture(scope="session")
def alphabet():
    return PhonemeAlphabet()


@pytest.fixture(scope="session")
def tiny_lexicon(alphabet):
    return Lexicon(
        {
            "la": ("l", "a"),
            "pa": ("p", "a"),
            "mesa": ("m", "e", "s", "a"),
            "tu": ("t", "u"),
            "oso": ("o", "s", "o"),
        },
        alphabet,
    )
