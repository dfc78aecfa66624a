import pytest

import properties


@pytest.mark.parametrize("name", sorted(properties.ALL))
def test_property(name):
    properties.run(properties.ALL[name], 100)
