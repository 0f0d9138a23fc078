int tcp_init(void)
{
#ifdef CONFIG_DEBUG
	const char *banner = "tcp: #ifdef in a string";
#endif
	return 1;
}
