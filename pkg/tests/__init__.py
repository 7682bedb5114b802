"""
Test suite for ParaHom.

Slow desk-scale reproductions carry the ``slow`` marker:

    pytest tests/ -m "not slow"
"""
