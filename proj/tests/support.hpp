#pragma once

#include <gtest/gtest.h>

#include "fixtures.hpp"

#define EXPECT_CURATOR_ERROR(stmt, expected_code)                                              \
  do {                                                                                         \
    try {                                                                                      \
      stmt;                                                                                    \
      ADD_FAILURE() << "expected " << ::curator::to_string(expected_code) << ", nothing thrown"; \
    } catch (const ::curator::Error& e_) {                                                     \
      EXPECT_EQ(e_.code(), expected_code) << e_.what();                                        \
    }                                                                                          \
  } while (0)
