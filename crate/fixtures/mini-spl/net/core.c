int net_init(void)
{
#if defined(CONFIG_TCP)
	return tcp_init();
#endif
	return 0;
}
