# Tests for the adaptive finite element toolkit
