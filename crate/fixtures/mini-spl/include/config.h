#ifndef MINI_CONFIG_H
#define MINI_CONFIG_H
#if !defined(CONFIG_DEBUG)
#define NDEBUG
#endif
#endif
