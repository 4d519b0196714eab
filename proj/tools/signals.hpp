#pragma once

#include <csignal>
#include <pthread.h>

// Block SIGINT/SIGTERM in every thread started afterwards; the caller
// collects them with wait_for_shutdown_signal().
inline sigset_t block_shutdown_signals()
{
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);
    return set;
}

inline int wait_for_shutdown_signal(const sigset_t& set)
{
    int sig = 0;
    sigwait(&set, &sig);
    return sig;
}
